//! Unsupervised single-channel separation of additively mixed images.
//!
//! A masking network splits every mixture `y` into `y * M(y)` and
//! `y * (1 - M(y))`. Estimated sources of two unrelated mixtures are swapped
//! to synthesise new mixtures, and the masker is trained so that a
//! least-squares discriminator cannot tell those remixes from real data,
//! together with an energy-balance penalty and a remix-twice cycle penalty.

pub mod adversarial;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod objective;
pub mod optim;
pub mod remix;
pub mod scalar;
pub mod separator;
pub mod trainer;

pub use error::{Error, Result};
pub use image::{Image, Shape};
pub use scalar::Scalar;

/// Single-precision instantiations used by the command-line tool.
pub type Image32 = Image<f32>;
pub type MaskNet32 = separator::MaskNet<f32>;
pub type Discriminator32 = adversarial::Discriminator<f32>;
pub type TrainState32 = trainer::TrainState<f32>;
pub type Dataset32 = data::Dataset<f32>;

/// Double-precision instantiations, used for gradient checks.
pub type Image64 = Image<f64>;
pub type MaskNet64 = separator::MaskNet<f64>;
pub type Discriminator64 = adversarial::Discriminator<f64>;
pub type TrainState64 = trainer::TrainState<f64>;
