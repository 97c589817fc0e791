//! Unmix-and-remix: swap the estimated sources of two mixtures, then unmix
//! and swap again to recover the originals.

use crate::data::MixturePair;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;
use crate::separator::Separator;

/// Remixed pair `z1 = x_hat1 + b_hat2`, `z2 = x_hat2 + b_hat1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RemixBatch<T> {
    pub z1: Image<T>,
    pub z2: Image<T>,
    pub provenance: (usize, usize),
}

/// Result of unmixing the remixed pair and swapping once more.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleBatch<T> {
    pub y1_bar: Image<T>,
    pub y2_bar: Image<T>,
    /// `T(z1)`
    pub x1_bar: Image<T>,
    /// `T(z2)`
    pub x2_bar: Image<T>,
    /// `z2 - T(z2)`
    pub b1_bar: Image<T>,
    /// `z1 - T(z1)`
    pub b2_bar: Image<T>,
}

fn check_pair<T: Scalar, S: Separator<T>>(a: &Image<T>, b: &Image<T>, model: &S) -> Result<()> {
    let want = model.input_shape();
    for img in [a, b] {
        if img.shape() != want {
            return Err(Error::dims(want, img.shape()));
        }
    }
    Ok(())
}

/// Separates both mixtures and swaps their source estimates.
pub fn remix<T: Scalar, S: Separator<T>>(pair: &MixturePair<T>, model: &S) -> Result<RemixBatch<T>> {
    check_pair(&pair.y1, &pair.y2, model)?;
    let mut parts = model.separate_all(&[pair.y1.clone(), pair.y2.clone()])?;
    let s2 = parts.pop().unwrap();
    let s1 = parts.pop().unwrap();
    Ok(RemixBatch {
        z1: &s1.x_hat + &s2.b_hat,
        z2: &s2.x_hat + &s1.b_hat,
        provenance: pair.provenance,
    })
}

/// Unmixes `z1`, `z2` and reassembles
/// `y1_bar = T(z1) + (z2 - T(z2))`, `y2_bar = T(z2) + (z1 - T(z1))`.
pub fn cycle<T: Scalar, S: Separator<T>>(
    pair: &MixturePair<T>,
    remixed: &RemixBatch<T>,
    model: &S,
) -> Result<CycleBatch<T>> {
    check_pair(&pair.y1, &pair.y2, model)?;
    check_pair(&remixed.z1, &remixed.z2, model)?;
    let mut parts = model.separate_all(&[remixed.z1.clone(), remixed.z2.clone()])?;
    let s2 = parts.pop().unwrap();
    let s1 = parts.pop().unwrap();
    let (x1_bar, b2_bar) = (s1.x_hat, s1.b_hat);
    let (x2_bar, b1_bar) = (s2.x_hat, s2.b_hat);
    Ok(CycleBatch {
        y1_bar: &x1_bar + &b1_bar,
        y2_bar: &x2_bar + &b2_bar,
        x1_bar,
        x2_bar,
        b1_bar,
        b2_bar,
    })
}
