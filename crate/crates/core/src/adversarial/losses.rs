use crate::data::MixturePair;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::remix::CycleBatch;
use crate::scalar::{lit, Scalar};

use super::Discriminator;

/// Weights of the confusion (`alpha`) and energy-equity (`beta`) terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 5.0, beta: 5.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) || !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::Config(format!(
                "loss weights must be finite and non-negative, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Distance used by the cycle term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CycleNorm {
    /// Mean absolute error.
    #[default]
    L1,
    /// Mean squared error.
    L2,
}

impl CycleNorm {
    pub fn as_str(self) -> &'static str {
        match self {
            CycleNorm::L1 => "l1",
            CycleNorm::L2 => "l2",
        }
    }
}

impl std::str::FromStr for CycleNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" | "L1" => Ok(CycleNorm::L1),
            "l2" | "L2" => Ok(CycleNorm::L2),
            _ => Err(Error::Config(format!("unknown cycle norm {s:?}"))),
        }
    }
}

fn non_empty<T>(xs: &[T], what: &str) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Config(format!("{what} batch is empty")));
    }
    Ok(())
}

/// Least-squares critic loss on raw scores and its gradients with respect to
/// each score: `mean (s_real - 1)^2 + mean s_fake^2`.
pub fn lsgan_disc_scores<T: Scalar>(real: &[T], fake: &[T]) -> Result<(T, Vec<T>, Vec<T>)> {
    non_empty(real, "real")?;
    non_empty(fake, "fake")?;
    let two = lit::<T>(2.0);
    let nr = T::from_usize(real.len()).unwrap();
    let nf = T::from_usize(fake.len()).unwrap();
    let lr = real.iter().map(|&s| (s - T::one()) * (s - T::one())).sum::<T>() / nr;
    let lf = fake.iter().map(|&s| s * s).sum::<T>() / nf;
    let gr = real.iter().map(|&s| two * (s - T::one()) / nr).collect();
    let gf = fake.iter().map(|&s| two * s / nf).collect();
    Ok((lr + lf, gr, gf))
}

/// `mean (s - 1)^2` over fake scores and its gradient.
pub fn lsgan_confusion_scores<T: Scalar>(fake: &[T]) -> Result<(T, Vec<T>)> {
    non_empty(fake, "fake")?;
    let two = lit::<T>(2.0);
    let n = T::from_usize(fake.len()).unwrap();
    let l = fake.iter().map(|&s| (s - T::one()) * (s - T::one())).sum::<T>() / n;
    let g = fake.iter().map(|&s| two * (s - T::one()) / n).collect();
    Ok((l, g))
}

/// Energy-equity value over flat buffers, `mean (y m)^2 + (y (1 - m))^2`,
/// with its gradient `2 y^2 (2m - 1) / N` with respect to `m`.
pub fn energy_equity_flat<T: Scalar>(y: &[T], m: &[T]) -> Result<(T, Vec<T>)> {
    if y.len() != m.len() {
        return Err(Error::dims(y.len(), m.len()));
    }
    non_empty(y, "mixture")?;
    let n = T::from_usize(y.len()).unwrap();
    let two = lit::<T>(2.0);
    let mut sum = T::zero();
    let mut grad = Vec::with_capacity(y.len());
    for (&yv, &mv) in y.iter().zip(m) {
        let a = yv * mv;
        let b = yv * (T::one() - mv);
        sum += a * a + b * b;
        grad.push(two * yv * yv * (two * mv - T::one()) / n);
    }
    Ok((sum / n, grad))
}

/// Cycle distance between flat buffers and its gradient with respect to the
/// reconstruction. The L1 subgradient at zero is taken as zero.
pub fn cycle_distance_flat<T: Scalar>(recon: &[T], target: &[T], norm: CycleNorm) -> Result<(T, Vec<T>)> {
    if recon.len() != target.len() {
        return Err(Error::dims(target.len(), recon.len()));
    }
    non_empty(recon, "cycle")?;
    let n = T::from_usize(recon.len()).unwrap();
    let two = lit::<T>(2.0);
    let mut sum = T::zero();
    let mut grad = Vec::with_capacity(recon.len());
    for (&r, &t) in recon.iter().zip(target) {
        let d = r - t;
        match norm {
            CycleNorm::L1 => {
                sum += d.abs();
                let s = if d > T::zero() {
                    T::one()
                } else if d < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                grad.push(s / n);
            }
            CycleNorm::L2 => {
                sum += d * d;
                grad.push(two * d / n);
            }
        }
    }
    Ok((sum / n, grad))
}

/// Critic loss on real mixtures and (detached) remixes.
pub fn disc_loss<T: Scalar>(d: &Discriminator<T>, reals: &[Image<T>], fakes: &[Image<T>]) -> Result<T> {
    non_empty(reals, "real")?;
    non_empty(fakes, "fake")?;
    let (l, _, _) = lsgan_disc_scores(&d.score_images(reals)?, &d.score_images(fakes)?)?;
    Ok(l)
}

/// Loss the masker minimises to make remixes score as real.
pub fn confusion_loss<T: Scalar>(d: &Discriminator<T>, fakes: &[Image<T>]) -> Result<T> {
    non_empty(fakes, "fake")?;
    Ok(lsgan_confusion_scores(&d.score_images(fakes)?)?.0)
}

/// Pixel-mean energy-equity loss over a batch of mixtures and their masks.
pub fn energy_equity_loss<T: Scalar>(ys: &[Image<T>], masks: &[Image<T>]) -> Result<T> {
    non_empty(ys, "mixture")?;
    if ys.len() != masks.len() {
        return Err(Error::dims(ys.len(), masks.len()));
    }
    let mut y = Vec::new();
    let mut m = Vec::new();
    for (yi, mi) in ys.iter().zip(masks) {
        yi.ensure_same_shape(mi)?;
        y.extend_from_slice(yi.as_slice());
        m.extend_from_slice(mi.as_slice());
    }
    Ok(energy_equity_flat(&y, &m)?.0)
}

/// `dist(y1_bar, y1) + dist(y2_bar, y2)`, each a per-pixel mean.
pub fn cycle_loss<T: Scalar>(pair: &MixturePair<T>, cyc: &CycleBatch<T>, norm: CycleNorm) -> Result<T> {
    pair.y1.ensure_same_shape(&cyc.y1_bar)?;
    pair.y2.ensure_same_shape(&cyc.y2_bar)?;
    let (a, _) = cycle_distance_flat(cyc.y1_bar.as_slice(), pair.y1.as_slice(), norm)?;
    let (b, _) = cycle_distance_flat(cyc.y2_bar.as_slice(), pair.y2.as_slice(), norm)?;
    Ok(a + b)
}

/// `l_c + alpha l_m + beta l_e`; a non-finite component is a divergence.
pub fn total_masker_loss<T: Scalar>(l_c: T, l_m: T, l_e: T, w: &LossWeights) -> Result<T> {
    for (name, v) in [("l_c", l_c), ("l_m", l_m), ("l_e", l_e)] {
        if !v.is_finite() {
            return Err(Error::Divergence {
                step: 0,
                detail: format!("{name} = {v}"),
            });
        }
    }
    Ok(l_c + lit::<T>(w.alpha) * l_m + lit::<T>(w.beta) * l_e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Shape;

    #[test]
    fn lsgan_closed_forms() {
        let (l, _, _) = lsgan_disc_scores(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(l, 0.0);
        let (l, _, _) = lsgan_disc_scores(&[0.5; 3], &[0.5; 3]).unwrap();
        assert_eq!(l, 0.5);
        assert_eq!(lsgan_confusion_scores(&[1.0f64; 4]).unwrap().0, 0.0);
        assert_eq!(lsgan_confusion_scores(&[0.0f64; 4]).unwrap().0, 1.0);
    }

    #[test]
    fn best_constant_critic_is_one_half() {
        // (d - 1)^2 + d^2 is minimised at d = 1/2; scan a fine grid.
        let best = (0..=1000)
            .map(|i| i as f64 / 1000.0)
            .min_by(|a, b| {
                let la = lsgan_disc_scores(&[*a], &[*a]).unwrap().0;
                let lb = lsgan_disc_scores(&[*b], &[*b]).unwrap().0;
                la.partial_cmp(&lb).unwrap()
            })
            .unwrap();
        assert_eq!(best, 0.5);
    }

    #[test]
    fn empty_batches_are_config_errors() {
        assert!(matches!(lsgan_disc_scores::<f64>(&[], &[0.0]), Err(Error::Config(_))));
        assert!(matches!(lsgan_confusion_scores::<f64>(&[]), Err(Error::Config(_))));
    }

    #[test]
    fn energy_examples() {
        assert_eq!(energy_equity_flat(&[1.0], &[0.5]).unwrap().0, 0.5);
        assert_eq!(energy_equity_flat(&[1.0], &[1.0]).unwrap().0, 1.0);
        let shape = Shape::new(1, 2, 1);
        let y = Image::filled(shape, 1.0f64);
        let m = Image::filled(Shape::new(2, 1, 1), 0.5);
        assert!(matches!(energy_equity_loss(&[y], &[m]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn cycle_examples() {
        let shape = Shape::new(2, 2, 1);
        let y = Image::filled(shape, 0.3f64);
        let pair = MixturePair::new(y.clone(), y.clone());
        let shifted = y.map(|v| v + 0.1);
        let cyc = CycleBatch {
            y1_bar: shifted.clone(),
            y2_bar: shifted,
            x1_bar: y.clone(),
            x2_bar: y.clone(),
            b1_bar: y.clone(),
            b2_bar: y.clone(),
        };
        let l = cycle_loss(&pair, &cyc, CycleNorm::L1).unwrap();
        assert!((l - 0.2).abs() < 1e-12);
        let exact = CycleBatch {
            y1_bar: y.clone(),
            y2_bar: y.clone(),
            ..cyc
        };
        assert_eq!(cycle_loss(&pair, &exact, CycleNorm::L1).unwrap(), 0.0);
    }

    #[test]
    fn total_examples() {
        let w = LossWeights::default();
        assert_eq!(total_masker_loss(1.0, 1.0, 1.0, &w).unwrap(), 11.0);
        assert_eq!(total_masker_loss(0.0, 0.0, 0.0, &w).unwrap(), 0.0);
        assert!((total_masker_loss(0.2, 0.1, 0.04, &w).unwrap() - 0.9f64).abs() < 1e-12);
        assert!(matches!(
            total_masker_loss(f64::NAN, 0.0, 0.0, &w),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn negative_weights_rejected() {
        assert!(LossWeights { alpha: -1.0, beta: 5.0 }.validate().is_err());
        assert!(LossWeights { alpha: 0.0, beta: 0.0 }.validate().is_ok());
    }
}
