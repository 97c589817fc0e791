//! Batched forward and backward passes of the training objectives.
//!
//! The masker is applied twice per pair batch (once to the mixtures, once to
//! the remixes), so gradients from both applications are accumulated into one
//! buffer.

use crate::adversarial::{
    cycle_distance_flat, energy_equity_flat, lsgan_confusion_scores, lsgan_disc_scores, CycleNorm,
    Discriminator, LossWeights,
};
use crate::data::MixturePair;
use crate::error::{Error, Result};
use crate::nn::{ParamGrads, Tensor};
use crate::scalar::{lit, Scalar};
use crate::separator::MaskNet;

/// Multipliers for the three masker terms. The training objective is
/// `{cycle: 1, confusion: alpha, energy: beta}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermWeights<T> {
    pub cycle: T,
    pub confusion: T,
    pub energy: T,
}

impl<T: Scalar> TermWeights<T> {
    pub fn total(w: &LossWeights) -> Self {
        TermWeights {
            cycle: T::one(),
            confusion: lit(w.alpha),
            energy: lit(w.beta),
        }
    }

    pub fn only_cycle() -> Self {
        TermWeights {
            cycle: T::one(),
            confusion: T::zero(),
            energy: T::zero(),
        }
    }

    pub fn only_confusion() -> Self {
        TermWeights {
            cycle: T::zero(),
            confusion: T::one(),
            energy: T::zero(),
        }
    }

    pub fn only_energy() -> Self {
        TermWeights {
            cycle: T::zero(),
            confusion: T::zero(),
            energy: T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskerTerms<T> {
    pub l_c: T,
    pub l_m: T,
    pub l_e: T,
    /// `cycle l_c + confusion l_m + energy l_e` under the weights used.
    pub weighted: T,
    pub mean_mask: T,
}

#[derive(Debug, Clone)]
pub struct MaskerPass<T> {
    pub terms: MaskerTerms<T>,
    pub grads: Option<ParamGrads<T>>,
    /// `[y1; y2]` for the critic's real side.
    pub mixtures: Tensor<T>,
    /// `[z1; z2]`, detached.
    pub remixes: Tensor<T>,
}

/// Stacks a pair batch into `[y1_0..y1_n; y2_0..y2_n]`.
pub fn stack_pairs<T: Scalar>(pairs: &[MixturePair<T>]) -> Result<Tensor<T>> {
    if pairs.is_empty() {
        return Err(Error::Config("pair batch is empty".into()));
    }
    let y1 = Tensor::stack(pairs.iter().map(|p| &p.y1))?;
    let y2 = Tensor::stack(pairs.iter().map(|p| &p.y2))?;
    y1.concat(&y2)
}

fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    a.zip_map(b, |x, y| x * y)
}

fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    a.zip_map(b, |x, y| x + y)
}

fn sub<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    a.zip_map(b, |x, y| x - y)
}

fn swap_halves<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let (a, b) = t.split_at(t.n / 2);
    b.concat(&a).expect("halves share dims")
}

/// Evaluates the masker objective on a pair batch and, when `want_grad`,
/// its gradient with respect to the masker parameters. The critic is held
/// fixed.
pub fn masker_objective<T: Scalar>(
    masker: &MaskNet<T>,
    disc: &Discriminator<T>,
    pairs: &[MixturePair<T>],
    w: TermWeights<T>,
    norm: CycleNorm,
    want_grad: bool,
) -> Result<MaskerPass<T>> {
    let y = stack_pairs(pairs)?;
    let shape = masker.arch().shape;
    if y.image_shape() != shape {
        return Err(Error::dims(shape, y.image_shape()));
    }
    let n = pairs.len();
    let net = masker.network();

    let tape_y = net.forward(&y);
    let m_y = tape_y.output();
    let x_hat = mul(&y, m_y);
    let b_hat = sub(&y, &x_hat);
    // z = [x1 + b2; x2 + b1]
    let z = add(&x_hat, &swap_halves(&b_hat));

    let tape_z = net.forward(&z);
    let m_z = tape_z.output();
    let t_z = mul(&z, m_z);
    // y_bar = [T(z1) + z2 - T(z2); T(z2) + z1 - T(z1)]
    let y_bar = add(&t_z, &sub(&swap_halves(&z), &swap_halves(&t_z)));

    let half = n * y.item_len();
    let (l1, g1) = cycle_distance_flat(&y_bar.data[..half], &y.data[..half], norm)?;
    let (l2, g2) = cycle_distance_flat(&y_bar.data[half..], &y.data[half..], norm)?;
    let l_c = l1 + l2;

    let tape_d = disc.network().forward(&z);
    let (l_m, g_scores) = lsgan_confusion_scores(&tape_d.output().data)?;

    let (l_e, g_energy) = energy_equity_flat(&y.data, &m_y.data)?;

    let mean_mask = m_y.data.iter().copied().sum::<T>() / T::from_usize(m_y.data.len()).unwrap();
    let terms = MaskerTerms {
        l_c,
        l_m,
        l_e,
        weighted: w.cycle * l_c + w.confusion * l_m + w.energy * l_e,
        mean_mask,
    };

    let grads = if want_grad {
        let mut grads = net.zero_grads();

        let mut g_ybar = g1;
        g_ybar.extend(g2);
        let g_ybar = y.with_data(g_ybar.into_iter().map(|g| g * w.cycle).collect());
        let g_ybar_sw = swap_halves(&g_ybar);
        // y_bar depends on T(z) through +T(z) and -swap(T(z)), on z through swap(z).
        let g_tz = sub(&g_ybar, &g_ybar_sw);
        let mut g_z = g_ybar_sw;

        let g_mz = mul(&g_tz, &z);
        g_z = add(&g_z, &mul(&g_tz, m_z));
        g_z = add(&g_z, &net.backward(&tape_z, g_mz, Some(&mut grads)));

        let g_scores = tape_d.output().with_data(g_scores.into_iter().map(|g| g * w.confusion).collect());
        g_z = add(&g_z, &disc.network().backward(&tape_d, g_scores, None));

        // z = x_hat + swap(b_hat), x_hat = y m, b_hat = y - y m
        let g_bhat = swap_halves(&g_z);
        let g_my = mul(&sub(&g_z, &g_bhat), &y);
        let g_my = g_my.zip_map(&y.with_data(g_energy), |a, e| a + w.energy * e);
        net.backward(&tape_y, g_my, Some(&mut grads));
        Some(grads)
    } else {
        None
    };

    Ok(MaskerPass {
        terms,
        grads,
        mixtures: y,
        remixes: z,
    })
}

/// Critic loss on `reals` vs `fakes` and, when `want_grad`, its gradient
/// with respect to the critic parameters.
pub fn disc_objective<T: Scalar>(
    disc: &Discriminator<T>,
    reals: &Tensor<T>,
    fakes: &Tensor<T>,
    want_grad: bool,
) -> Result<(T, Option<ParamGrads<T>>)> {
    let shape = disc.input_shape();
    for t in [reals, fakes] {
        if t.image_shape() != shape {
            return Err(Error::dims(shape, t.image_shape()));
        }
    }
    let net = disc.network();
    let tape_r = net.forward(reals);
    let tape_f = net.forward(fakes);
    let (l, gr, gf) = lsgan_disc_scores(&tape_r.output().data, &tape_f.output().data)?;
    if !want_grad {
        return Ok((l, None));
    }
    let mut grads = net.zero_grads();
    net.backward(&tape_r, tape_r.output().with_data(gr), Some(&mut grads));
    net.backward(&tape_f, tape_f.output().with_data(gf), Some(&mut grads));
    Ok((l, Some(grads)))
}

/// Supervised regression `mean|y m - x| + mean|(y - y m) - b|` against the
/// given targets.
pub fn supervised_objective<T: Scalar>(
    masker: &MaskNet<T>,
    ys: &Tensor<T>,
    xs: &Tensor<T>,
    bs: &Tensor<T>,
    want_grad: bool,
) -> Result<(T, T, Option<ParamGrads<T>>)> {
    let shape = masker.arch().shape;
    if ys.image_shape() != shape {
        return Err(Error::dims(shape, ys.image_shape()));
    }
    ys.ensure_same_dims(xs)?;
    ys.ensure_same_dims(bs)?;
    let net = masker.network();
    let tape = net.forward(ys);
    let m = tape.output();
    let x_hat = mul(ys, m);
    let b_hat = sub(ys, &x_hat);
    let (lx, gx) = cycle_distance_flat(&x_hat.data, &xs.data, CycleNorm::L1)?;
    let (lb, gb) = cycle_distance_flat(&b_hat.data, &bs.data, CycleNorm::L1)?;
    let mean_mask = m.data.iter().copied().sum::<T>() / T::from_usize(m.data.len()).unwrap();
    if !want_grad {
        return Ok((lx + lb, mean_mask, None));
    }
    let g_m: Vec<T> = gx
        .iter()
        .zip(&gb)
        .zip(&ys.data)
        .map(|((&a, &b), &yv)| (a - b) * yv)
        .collect();
    let mut grads = net.zero_grads();
    net.backward(&tape, ys.with_data(g_m), Some(&mut grads));
    Ok((lx + lb, mean_mask, Some(grads)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversarial::{confusion_loss, cycle_loss, energy_equity_loss};
    use crate::image::{Image, Shape};
    use crate::remix::{cycle, remix};
    use crate::separator::{ArchDescriptor, Separator};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (MaskNet<f64>, Discriminator<f64>, Vec<MixturePair<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = ArchDescriptor::for_shape(Shape::new(8, 8, 1), 3).unwrap();
        let masker = MaskNet::new(arch, &mut rng);
        let disc = Discriminator::new(arch, &mut rng);
        let img = |rng: &mut ChaCha8Rng| {
            Image::from_vec(arch.shape, (0..64).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
        };
        let pairs = (0..3).map(|_| MixturePair::new(img(&mut rng), img(&mut rng))).collect();
        (masker, disc, pairs)
    }

    #[test]
    fn batched_terms_agree_with_per_image_losses() {
        let (masker, disc, pairs) = setup(3);
        let pass = masker_objective(&masker, &disc, &pairs, TermWeights::only_cycle(), CycleNorm::L1, false).unwrap();
        let mut l_c = 0.0;
        let mut fakes = Vec::new();
        let mut ys = Vec::new();
        let mut masks = Vec::new();
        for p in &pairs {
            let r = remix(p, &masker).unwrap();
            let c = cycle(p, &r, &masker).unwrap();
            l_c += cycle_loss(p, &c, CycleNorm::L1).unwrap();
            fakes.push(r.z1);
            fakes.push(r.z2);
            ys.push(p.y1.clone());
            ys.push(p.y2.clone());
        }
        for y in &ys {
            masks.push(masker.masks(std::slice::from_ref(y)).unwrap().pop().unwrap());
        }
        l_c /= pairs.len() as f64;
        assert!((pass.terms.l_c - l_c).abs() < 1e-12);
        let l_m = confusion_loss(&disc, &fakes).unwrap();
        assert!((pass.terms.l_m - l_m).abs() < 1e-12);
        let l_e = energy_equity_loss(&ys, &masks).unwrap();
        assert!((pass.terms.l_e - l_e).abs() < 1e-12);
    }

    #[test]
    fn identical_pairs_give_zero_cycle_gradient() {
        let (masker, disc, pairs) = setup(5);
        let same: Vec<_> = pairs.iter().map(|p| MixturePair::new(p.y1.clone(), p.y1.clone())).collect();
        let pass = masker_objective(&masker, &disc, &same, TermWeights::only_cycle(), CycleNorm::L1, true).unwrap();
        assert!(pass.terms.l_c < 1e-12);
        assert!(pass.grads.unwrap().flat().all(|g| g == 0.0));
    }

    #[test]
    fn empty_batch_rejected() {
        let (masker, disc, _) = setup(1);
        let r = masker_objective(&masker, &disc, &[], TermWeights::only_cycle(), CycleNorm::L1, false);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
