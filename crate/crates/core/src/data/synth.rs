use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{GroundTruth, Mixture, Sampling, SourceImage};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// Weight applied to each source when mixing.
pub const MIX_WEIGHT: f64 = 0.5;

/// `0.5 * x + 0.5 * b`.
pub fn mix<T: Scalar>(x: &Image<T>, b: &Image<T>) -> Result<Image<T>> {
    let w = T::from_f64(MIX_WEIGHT).unwrap();
    x.zip_map(b, |xv, bv| w * xv + w * bv)
}

/// Draws `count` (x, b) pairs and mixes them with equal weights, keeping the
/// sources as ground truth. Sampling is driven only by `rng`.
///
/// Without replacement, each source is used at most once, so `count` may not
/// exceed the smaller pool.
pub fn synthesize_mixtures<T: Scalar, R: Rng>(
    xs: &[SourceImage<T>],
    bs: &[SourceImage<T>],
    count: usize,
    sampling: Sampling,
    rng: &mut R,
) -> Result<Vec<Mixture<T>>> {
    if xs.is_empty() || bs.is_empty() {
        return Err(Error::Data(format!(
            "need both sources to mix (got {} x, {} b)",
            xs.len(),
            bs.len()
        )));
    }
    let (xi, bi): (Vec<usize>, Vec<usize>) = match sampling {
        Sampling::WithReplacement => (0..count)
            .map(|_| (rng.random_range(0..xs.len()), rng.random_range(0..bs.len())))
            .unzip(),
        Sampling::WithoutReplacement => {
            let available = xs.len().min(bs.len());
            if count > available {
                return Err(Error::Data(format!(
                    "{count} mixtures requested without replacement, only {available} unique pairs available"
                )));
            }
            let mut px: Vec<usize> = (0..xs.len()).collect();
            let mut pb: Vec<usize> = (0..bs.len()).collect();
            px.shuffle(rng);
            pb.shuffle(rng);
            px.truncate(count);
            pb.truncate(count);
            (px, pb)
        }
    };
    xi.into_iter()
        .zip(bi)
        .map(|(i, j)| {
            let (x, b) = (&xs[i], &bs[j]);
            Ok(Mixture {
                pixels: mix(&x.pixels, &b.pixels)?,
                ground_truth: Some(GroundTruth {
                    x: x.clone(),
                    b: b.clone(),
                }),
            })
        })
        .collect()
}
