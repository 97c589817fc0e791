use crate::error::{Error, Result};
use crate::nn::{NamedTensor, ParamGrads};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment accumulators for one parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &[NamedTensor<T>]) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.data.len()]).collect();
        Adam {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn matches(&self, params: &[NamedTensor<T>]) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .zip(&self.m)
                .zip(&self.v)
                .all(|((p, m), v)| p.data.len() == m.len() && p.data.len() == v.len())
    }

    /// One bias-corrected update. With `lr == 0` the parameters are left
    /// untouched bit for bit; the moments still advance.
    pub fn update(&mut self, params: &mut [NamedTensor<T>], grads: &ParamGrads<T>, cfg: &AdamConfig) -> Result<()> {
        if !self.matches(params) || grads.tensors.len() != params.len() {
            return Err(Error::Incompatible("optimizer state does not match the parameters".into()));
        }
        self.step += 1;
        let b1: T = lit(cfg.beta1);
        let b2: T = lit(cfg.beta2);
        let eps: T = lit(cfg.eps);
        let t = self.step as i32;
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let lr: T = lit(cfg.lr);
        for (((p, g), m), v) in params.iter_mut().zip(&grads.tensors).zip(&mut self.m).zip(&mut self.v) {
            for (((w, &gi), mi), vi) in p.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                if cfg.lr != 0.0 {
                    let mh = *mi / c1;
                    let vh = *vi / c2;
                    *w -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(vals: &[f64]) -> Vec<NamedTensor<f64>> {
        vec![NamedTensor {
            name: "w".into(),
            dims: vec![vals.len()],
            data: vals.to_vec(),
        }]
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // After bias correction the first step is g / |g| (up to eps).
        let mut p = one_param(&[1.0, -2.0, 0.5]);
        let mut opt = Adam::new(&p);
        let g = ParamGrads {
            tensors: vec![vec![3.0, -0.25, 0.0]],
        };
        let cfg = AdamConfig { lr: 0.1, ..Default::default() };
        opt.update(&mut p, &g, &cfg).unwrap();
        assert!((p[0].data[0] - 0.9).abs() < 1e-7);
        assert!((p[0].data[1] - -1.9).abs() < 1e-7);
        assert_eq!(p[0].data[2], 0.5);
    }

    #[test]
    fn hand_computed_second_step() {
        let mut p = one_param(&[0.0]);
        let mut opt = Adam::new(&p);
        let cfg = AdamConfig::default();
        for g in [1.0, 2.0] {
            opt.update(&mut p, &ParamGrads { tensors: vec![vec![g]] }, &cfg).unwrap();
        }
        let (b1, b2) = (0.5f64, 0.999f64);
        let m1 = (1.0 - b1) * 1.0;
        let v1 = (1.0 - b2) * 1.0;
        let w1 = -1e-4 * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + 1e-8);
        let m2 = b1 * m1 + (1.0 - b1) * 2.0;
        let v2 = b2 * v1 + (1.0 - b2) * 4.0;
        let w2 = w1 - 1e-4 * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + 1e-8);
        assert!((p[0].data[0] - w2).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_is_bit_identical() {
        let mut p = one_param(&[0.123456789, -7.0]);
        let before = p.clone();
        let mut opt = Adam::new(&p);
        let cfg = AdamConfig { lr: 0.0, ..Default::default() };
        let g = ParamGrads {
            tensors: vec![vec![1e3, -1e-3]],
        };
        opt.update(&mut p, &g, &cfg).unwrap();
        assert_eq!(p, before);
    }
}
