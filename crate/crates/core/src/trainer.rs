//! Alternating masker/critic optimisation and the supervised baseline.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adversarial::{CycleNorm, Discriminator, LossWeights};
use crate::data::{epoch_batches, parse_kv, Mixture, MixturePair};
use crate::error::{Error, Result};
use crate::image::Shape;
use crate::nn::{ParamGrads, Tensor};
use crate::objective::{disc_objective, masker_objective, stack_pairs, supervised_objective, TermWeights};
use crate::optim::{Adam, AdamConfig};
use crate::scalar::Scalar;
use crate::separator::{ArchDescriptor, MaskNet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Unsupervised,
    Supervised,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Unsupervised => "unsupervised",
            TrainMode::Supervised => "supervised",
        }
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unsupervised" => Ok(TrainMode::Unsupervised),
            "supervised" => Ok(TrainMode::Supervised),
            _ => Err(Error::Config(format!("unknown training mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub mask_steps: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Multiplier on the cycle term; 1 in the standard objective, 0 to
    /// ablate it.
    pub cycle_weight: f64,
    pub cycle_norm: CycleNorm,
    /// Pairs per batch.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub mode: TrainMode,
    pub base_channels: usize,
    pub disc_channels: usize,
    /// Stop after this many steps regardless of `epochs`; 0 means no limit.
    pub max_steps: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            mask_steps: 4,
            alpha: 5.0,
            beta: 5.0,
            cycle_weight: 1.0,
            cycle_norm: CycleNorm::L1,
            batch_size: 64,
            epochs: 100,
            seed: 0,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            mode: TrainMode::Unsupervised,
            base_channels: 64,
            disc_channels: 64,
            max_steps: 0,
        }
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "learning_rate",
        "mask_steps",
        "alpha",
        "beta",
        "cycle_weight",
        "cycle_norm",
        "batch_size",
        "epochs",
        "seed",
        "adam_beta1",
        "adam_beta2",
        "mode",
        "base_channels",
        "disc_channels",
        "max_steps",
    ];

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            ..AdamConfig::default()
        }
    }

    pub fn term_weights<T: Scalar>(&self) -> TermWeights<T> {
        TermWeights {
            cycle: crate::scalar::lit(self.cycle_weight),
            ..TermWeights::total(&self.weights())
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        fn num<V: FromStr>(key: &str, v: &str) -> Result<V>
        where
            V::Err: std::fmt::Display,
        {
            v.parse().map_err(|e| Error::Config(format!("{key} = {v:?}: {e}")))
        }
        match key {
            "learning_rate" | "lr" => self.learning_rate = num(key, value)?,
            "mask_steps" => self.mask_steps = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "cycle_weight" => self.cycle_weight = num(key, value)?,
            "cycle_norm" => self.cycle_norm = value.parse()?,
            "batch_size" => self.batch_size = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "adam_beta1" => self.adam_beta1 = num(key, value)?,
            "adam_beta2" => self.adam_beta2 = num(key, value)?,
            "mode" => self.mode = value.parse()?,
            "base_channels" => self.base_channels = num(key, value)?,
            "disc_channels" => self.disc_channels = num(key, value)?,
            "max_steps" => self.max_steps = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown training key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (k, v) in parse_kv(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "mask_steps = {}", self.mask_steps);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(s, "cycle_weight = {}", self.cycle_weight);
        let _ = writeln!(s, "cycle_norm = {}", self.cycle_norm.as_str());
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "adam_beta1 = {}", self.adam_beta1);
        let _ = writeln!(s, "adam_beta2 = {}", self.adam_beta2);
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "base_channels = {}", self.base_channels);
        let _ = writeln!(s, "disc_channels = {}", self.disc_channels);
        let _ = writeln!(s, "max_steps = {}", self.max_steps);
        s
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("mask_steps", self.mask_steps),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("base_channels", self.base_channels),
            ("disc_channels", self.disc_channels),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        // Zero is allowed so that a step can be checked to be a no-op.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.cycle_weight >= 0.0 && self.cycle_weight.is_finite()) {
            return Err(Error::Config(format!("cycle_weight must be non-negative, got {}", self.cycle_weight)));
        }
        self.weights().validate()
    }
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub masker: MaskNet<T>,
    pub disc: Discriminator<T>,
    pub masker_opt: Adam<T>,
    pub disc_opt: Adam<T>,
    /// Completed training steps.
    pub step: u64,
    pub masker_updates: u64,
    pub disc_updates: u64,
    /// Seed of the batch-order generator; with `epoch` (its stream) and
    /// `batch_in_epoch` it pins the generator state.
    pub data_seed: u64,
    pub epoch: u64,
    pub batch_in_epoch: u64,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(shape: Shape, cfg: &TrainConfig) -> Result<Self> {
        let m_arch = ArchDescriptor::for_shape(shape, cfg.base_channels)?;
        let d_arch = ArchDescriptor::for_shape(shape, cfg.disc_channels)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let masker = MaskNet::new(m_arch, &mut rng);
        let disc = Discriminator::new(d_arch, &mut rng);
        Ok(Self::from_models(masker, disc, cfg.seed))
    }

    pub fn from_models(masker: MaskNet<T>, disc: Discriminator<T>, data_seed: u64) -> Self {
        let masker_opt = Adam::new(masker.network().params());
        let disc_opt = Adam::new(disc.network().params());
        TrainState {
            masker,
            disc,
            masker_opt,
            disc_opt,
            step: 0,
            masker_updates: 0,
            disc_updates: 0,
            data_seed,
            epoch: 0,
            batch_in_epoch: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Index of the step this report describes (0-based).
    pub step: u64,
    pub l_c: f64,
    pub l_m: f64,
    pub l_e: f64,
    pub l_d: f64,
    pub l_total: f64,
    pub mean_mask: f64,
    pub masker_updates: u64,
    pub disc_updates: u64,
}

impl StepReport {
    /// One line of the metrics log.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "step": self.step,
            "l_c": self.l_c,
            "l_m": self.l_m,
            "l_e": self.l_e,
            "l_d": self.l_d,
            "l_total": self.l_total,
            "mean_mask": self.mean_mask,
            "masker_updates": self.masker_updates,
            "disc_updates": self.disc_updates,
        })
        .to_string()
    }
}

fn f<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

fn check_finite<T: Scalar>(step: u64, what: &str, values: &[(&str, T)], grads: Option<&ParamGrads<T>>) -> Result<()> {
    for (name, v) in values {
        if !v.is_finite() {
            return Err(Error::Divergence {
                step,
                detail: format!("{what}: {name} = {v}"),
            });
        }
    }
    if let Some(g) = grads {
        if !g.all_finite() {
            return Err(Error::Divergence {
                step,
                detail: format!("{what}: non-finite gradient"),
            });
        }
    }
    Ok(())
}

/// `mask_steps` masker updates on `batch`, then one critic update on the
/// mixtures against freshly remixed (detached) fakes. On a non-finite loss
/// or gradient the state is restored and a divergence error returned.
pub fn train_step<T: Scalar>(state: &mut TrainState<T>, batch: &[MixturePair<T>], cfg: &TrainConfig) -> Result<StepReport> {
    if batch.is_empty() {
        return Err(Error::Config("training batch is empty".into()));
    }
    let snapshot = state.clone();
    let r = step_inner(state, batch, cfg);
    if r.is_err() {
        *state = snapshot;
    }
    r
}

fn step_inner<T: Scalar>(state: &mut TrainState<T>, batch: &[MixturePair<T>], cfg: &TrainConfig) -> Result<StepReport> {
    let step = state.step;
    let adam = cfg.adam();
    let w = cfg.term_weights::<T>();
    let mut first = None;
    for _ in 0..cfg.mask_steps {
        let pass = masker_objective(&state.masker, &state.disc, batch, w, cfg.cycle_norm, true)?;
        let t = pass.terms;
        check_finite(
            step,
            "masker",
            &[("l_c", t.l_c), ("l_m", t.l_m), ("l_e", t.l_e)],
            pass.grads.as_ref(),
        )?;
        first.get_or_insert(t);
        let grads = pass.grads.expect("gradient requested");
        state
            .masker_opt
            .update(state.masker.network_mut().params_mut(), &grads, &adam)?;
        state.masker_updates += 1;
    }
    let terms = first.expect("mask_steps >= 1");

    let reals = stack_pairs(batch)?;
    let fakes = remix_tensor(&state.masker, &reals);
    let (l_d, grads) = disc_objective(&state.disc, &reals, &fakes, true)?;
    check_finite(step, "critic", &[("l_d", l_d)], grads.as_ref())?;
    state
        .disc_opt
        .update(state.disc.network_mut().params_mut(), &grads.unwrap(), &adam)?;
    state.disc_updates += 1;
    state.step += 1;

    // The reported total always uses the standard objective weights.
    let l_total = crate::adversarial::total_masker_loss(terms.l_c, terms.l_m, terms.l_e, &cfg.weights())
        .map_err(|e| match e {
            Error::Divergence { detail, .. } => Error::Divergence { step, detail },
            other => other,
        })?;
    Ok(StepReport {
        step,
        l_c: f(terms.l_c),
        l_m: f(terms.l_m),
        l_e: f(terms.l_e),
        l_d: f(l_d),
        l_total: f(l_total),
        mean_mask: f(terms.mean_mask),
        masker_updates: state.masker_updates,
        disc_updates: state.disc_updates,
    })
}

/// `[z1; z2]` for a stacked `[y1; y2]` batch.
pub fn remix_tensor<T: Scalar>(masker: &MaskNet<T>, y: &Tensor<T>) -> Tensor<T> {
    let m = masker.network().infer(y);
    let x_hat = y.zip_map(&m, |a, b| a * b);
    let b_hat = y.zip_map(&x_hat, |a, b| a - b);
    let (b1, b2) = b_hat.split_at(y.n / 2);
    let swapped = b2.concat(&b1).expect("halves share dims");
    x_hat.zip_map(&swapped, |a, b| a + b)
}

/// One supervised regression update against the weighted ground-truth
/// components.
pub fn supervised_step<T: Scalar>(state: &mut TrainState<T>, batch: &[&Mixture<T>], cfg: &TrainConfig) -> Result<StepReport> {
    if batch.is_empty() {
        return Err(Error::Config("training batch is empty".into()));
    }
    let mut ys = Vec::with_capacity(batch.len());
    let mut xs = Vec::with_capacity(batch.len());
    let mut bs = Vec::with_capacity(batch.len());
    for m in batch {
        let (x, b) = m
            .components()
            .ok_or_else(|| Error::Config("supervised training needs ground truth on every mixture".into()))?;
        ys.push(&m.pixels);
        xs.push(x);
        bs.push(b);
    }
    let ys = Tensor::stack(ys)?;
    let xs = Tensor::stack(&xs)?;
    let bs = Tensor::stack(&bs)?;
    let step = state.step;
    let (loss, mean_mask, grads) = supervised_objective(&state.masker, &ys, &xs, &bs, true)?;
    check_finite(step, "supervised", &[("loss", loss)], grads.as_ref())?;
    state
        .masker_opt
        .update(state.masker.network_mut().params_mut(), &grads.unwrap(), &cfg.adam())?;
    state.masker_updates += 1;
    state.step += 1;
    Ok(StepReport {
        step,
        l_c: 0.0,
        l_m: 0.0,
        l_e: 0.0,
        l_d: 0.0,
        l_total: f(loss),
        mean_mask: f(mean_mask),
        masker_updates: state.masker_updates,
        disc_updates: state.disc_updates,
    })
}

/// What the step callback wants the loop to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Runs epochs from the state's data cursor until `cfg.epochs` (or
/// `cfg.max_steps`) is reached, calling `on_step` after every step.
pub fn fit<T: Scalar>(
    state: &mut TrainState<T>,
    train: &[Mixture<T>],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&TrainState<T>, &StepReport) -> Result<Control>,
) -> Result<()> {
    cfg.validate()?;
    if cfg.mode == TrainMode::Supervised && train.iter().any(|m| m.ground_truth.is_none()) {
        return Err(Error::Config("supervised training needs ground truth on every mixture".into()));
    }
    while (state.epoch as usize) < cfg.epochs {
        let batches = epoch_batches(train.len(), cfg.batch_size, state.data_seed, state.epoch)?;
        while (state.batch_in_epoch as usize) < batches.len() {
            if cfg.max_steps > 0 && state.step >= cfg.max_steps {
                return Ok(());
            }
            let idx = &batches[state.batch_in_epoch as usize];
            let report = match cfg.mode {
                TrainMode::Unsupervised => {
                    let pairs: Vec<_> = idx
                        .iter()
                        .map(|&(i, j)| MixturePair {
                            y1: train[i].pixels.clone(),
                            y2: train[j].pixels.clone(),
                            provenance: (i, j),
                        })
                        .collect();
                    train_step(state, &pairs, cfg)?
                }
                TrainMode::Supervised => {
                    let items: Vec<_> = idx.iter().flat_map(|&(i, j)| [&train[i], &train[j]]).collect();
                    supervised_step(state, &items, cfg)?
                }
            };
            state.batch_in_epoch += 1;
            if on_step(state, &report)? == Control::Stop {
                return Ok(());
            }
        }
        state.epoch += 1;
        state.batch_in_epoch = 0;
    }
    Ok(())
}

/// Supervised training of a fresh masker on ground-truthed mixtures.
pub fn train_supervised<T: Scalar>(train: &[Mixture<T>], cfg: &TrainConfig) -> Result<MaskNet<T>> {
    let shape = train
        .first()
        .ok_or_else(|| Error::Config("training set is empty".into()))?
        .pixels
        .shape();
    let cfg = TrainConfig {
        mode: TrainMode::Supervised,
        ..cfg.clone()
    };
    let mut state = TrainState::new(shape, &cfg)?;
    fit(&mut state, train, &cfg, |_, _| Ok(Control::Continue))?;
    Ok(state.masker)
}

/// Appends step reports as JSON lines.
pub struct MetricsLog<W: Write> {
    out: W,
}

impl<W: Write> MetricsLog<W> {
    pub fn new(out: W) -> Self {
        MetricsLog { out }
    }

    pub fn record(&mut self, report: &StepReport) -> std::io::Result<()> {
        writeln!(self.out, "{}", report.to_json())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
