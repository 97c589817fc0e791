//! PSNR and SSIM on a unit dynamic range, and permutation-resolved
//! evaluation of a separator against ground truth.

use std::fmt::Write as _;

use crate::data::Mixture;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;
use crate::separator::Separator;

/// Returned for a zero-error estimate.
pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

const EVAL_CHUNK: usize = 256;

pub fn mse<T: Scalar>(est: &Image<T>, reference: &Image<T>) -> Result<f64> {
    est.ensure_same_shape(reference)?;
    let n = est.as_slice().len();
    if n == 0 {
        return Err(Error::Config("cannot score an empty image".into()));
    }
    let sum: f64 = est
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(&a, &b)| {
            let d = a.to_f64().unwrap() - b.to_f64().unwrap();
            d * d
        })
        .sum();
    Ok(sum / n as f64)
}

/// `10 log10(1 / MSE)` in dB, capped at [`PSNR_CAP_DB`].
pub fn psnr<T: Scalar>(est: &Image<T>, reference: &Image<T>) -> Result<f64> {
    let e = mse(est, reference)?;
    if e == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / e).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut w: Vec<f64> = (0..SSIM_WINDOW * SSIM_WINDOW)
        .map(|k| {
            let (i, j) = ((k / SSIM_WINDOW) as f64 - r, (k % SSIM_WINDOW) as f64 - r);
            (-(i * i + j * j) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Mean single-scale SSIM over every full 11x11 window position and every
/// channel, computed in `f64`.
pub fn ssim<T: Scalar>(est: &Image<T>, reference: &Image<T>) -> Result<f64> {
    est.ensure_same_shape(reference)?;
    let s = est.shape();
    if s.height < SSIM_WINDOW || s.width < SSIM_WINDOW {
        return Err(Error::Config(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {s}"
        )));
    }
    let win = gaussian_window();
    let a: Vec<f64> = est.as_slice().iter().map(|v| v.to_f64().unwrap()).collect();
    let b: Vec<f64> = reference.as_slice().iter().map(|v| v.to_f64().unwrap()).collect();
    let (oh, ow) = (s.height - SSIM_WINDOW + 1, s.width - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for c in 0..s.channels {
        let base = c * s.plane();
        for r0 in 0..oh {
            for c0 in 0..ow {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..SSIM_WINDOW {
                    let row = base + (r0 + i) * s.width + c0;
                    for j in 0..SSIM_WINDOW {
                        let w = win[i * SSIM_WINDOW + j];
                        let (x, y) = (a[row + j], b[row + j]);
                        mx += w * x;
                        my += w * y;
                        xx += w * x * x;
                        yy += w * y * y;
                        xy += w * x * y;
                    }
                }
                let vx = xx - mx * mx;
                let vy = yy - my * my;
                let cov = xy - mx * my;
                total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
            }
        }
    }
    Ok(total / (s.channels * oh * ow) as f64)
}

/// Which estimate was matched with which source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    /// `x_hat -> x`, `b_hat -> b`
    Direct,
    /// `x_hat -> b`, `b_hat -> x`
    Swapped,
}

impl Assignment {
    pub fn as_str(self) -> &'static str {
        match self {
            Assignment::Direct => "direct",
            Assignment::Swapped => "swapped",
        }
    }
}

/// Aggregate scores under the single best global assignment. SSIM fields
/// are `None` when the images are smaller than the SSIM window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub psnr_x: f64,
    pub psnr_b: f64,
    pub ssim_x: Option<f64>,
    pub ssim_b: Option<f64>,
    pub psnr_mean: f64,
    pub ssim_mean: Option<f64>,
    pub assignment: Assignment,
    pub n_examples: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_else(|| "na".into())
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "psnr_x,psnr_b,psnr_mean,ssim_x,ssim_b,ssim_mean,assignment,n_examples";

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "psnr_x = {:.6}", self.psnr_x);
        let _ = writeln!(s, "psnr_b = {:.6}", self.psnr_b);
        let _ = writeln!(s, "psnr_mean = {:.6}", self.psnr_mean);
        let _ = writeln!(s, "ssim_x = {}", opt(self.ssim_x));
        let _ = writeln!(s, "ssim_b = {}", opt(self.ssim_b));
        let _ = writeln!(s, "ssim_mean = {}", opt(self.ssim_mean));
        let _ = writeln!(s, "assignment = {}", self.assignment.as_str());
        let _ = writeln!(s, "n_examples = {}", self.n_examples);
        s
    }

    /// Header line plus one data row.
    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{:.6},{:.6},{:.6},{},{},{},{},{}\n",
            Self::CSV_HEADER,
            self.psnr_x,
            self.psnr_b,
            self.psnr_mean,
            opt(self.ssim_x),
            opt(self.ssim_b),
            opt(self.ssim_mean),
            self.assignment.as_str(),
            self.n_examples
        )
    }
}

#[derive(Default)]
struct Sums {
    psnr: [f64; 2],
    ssim: [f64; 2],
}

/// Scores `model` on ground-truthed mixtures against the weighted
/// components `(0.5 x, 0.5 b)`, picking one assignment for the whole set by
/// mean PSNR.
pub fn evaluate<T: Scalar, S: Separator<T>>(model: &S, valset: &[Mixture<T>]) -> Result<EvalReport> {
    if valset.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    let shape = valset[0].pixels.shape();
    let with_ssim = shape.height >= SSIM_WINDOW && shape.width >= SSIM_WINDOW;
    let mut direct = Sums::default();
    let mut swapped = Sums::default();
    for chunk in valset.chunks(EVAL_CHUNK) {
        let ys: Vec<_> = chunk.iter().map(|m| m.pixels.clone()).collect();
        let seps = model.separate_all(&ys)?;
        for (m, sep) in chunk.iter().zip(seps) {
            let (x, b) = m
                .components()
                .ok_or_else(|| Error::Config("evaluation needs ground truth on every mixture".into()))?;
            direct.psnr[0] += psnr(&sep.x_hat, &x)?;
            direct.psnr[1] += psnr(&sep.b_hat, &b)?;
            swapped.psnr[0] += psnr(&sep.b_hat, &x)?;
            swapped.psnr[1] += psnr(&sep.x_hat, &b)?;
            if with_ssim {
                direct.ssim[0] += ssim(&sep.x_hat, &x)?;
                direct.ssim[1] += ssim(&sep.b_hat, &b)?;
                swapped.ssim[0] += ssim(&sep.b_hat, &x)?;
                swapped.ssim[1] += ssim(&sep.x_hat, &b)?;
            }
        }
    }
    let n = valset.len() as f64;
    let (sums, assignment) = if swapped.psnr[0] + swapped.psnr[1] > direct.psnr[0] + direct.psnr[1] {
        (swapped, Assignment::Swapped)
    } else {
        (direct, Assignment::Direct)
    };
    let psnr_x = sums.psnr[0] / n;
    let psnr_b = sums.psnr[1] / n;
    let (ssim_x, ssim_b) = if with_ssim {
        (Some(sums.ssim[0] / n), Some(sums.ssim[1] / n))
    } else {
        (None, None)
    };
    Ok(EvalReport {
        psnr_x,
        psnr_b,
        ssim_x,
        ssim_b,
        psnr_mean: (psnr_x + psnr_b) / 2.0,
        ssim_mean: ssim_x.zip(ssim_b).map(|(a, b)| (a + b) / 2.0),
        assignment,
        n_examples: valset.len(),
    })
}
