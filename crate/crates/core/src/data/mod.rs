//! Source ingestion, mixture synthesis, on-disk datasets and pair batching.

mod batch;
mod folder;
mod idx;
mod manifest;
mod rmxt;
mod store;
mod synth;
pub mod toy;

pub use batch::{batch_pairs, epoch_batches, epoch_pairs, sample_indices, BatchStream};
pub use folder::{load_image_file, load_image_folder, FolderImages};
pub use idx::{load_mnist, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels, MNIST_PAD};
pub use manifest::{parse_kv, DatasetManifest, Profile, Sampling, SourceKind};
pub use rmxt::{read_blob, write_blob, RMXT_HEADER_LEN, RMXT_MAGIC, RMXT_VERSION};
pub use store::{build_dataset, dataset_hash, load_dataset, save_dataset, Dataset, SKIPPED_LOG};
pub use synth::{mix, synthesize_mixtures, MIX_WEIGHT};

use crate::image::Image;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceLabel {
    SourceX,
    SourceB,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceImage<T> {
    pub pixels: Image<T>,
    pub label: SourceLabel,
    pub origin_id: String,
}

/// The clean sources behind a mixture, kept for evaluation only.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T> {
    pub x: SourceImage<T>,
    pub b: SourceImage<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture<T> {
    pub pixels: Image<T>,
    pub ground_truth: Option<GroundTruth<T>>,
}

impl<T: Scalar> Mixture<T> {
    /// The weighted source contributions actually present in the mixture,
    /// `(w * x, w * b)`.
    pub fn components(&self) -> Option<(Image<T>, Image<T>)> {
        let gt = self.ground_truth.as_ref()?;
        let w = T::from_f64(MIX_WEIGHT).unwrap();
        Some((gt.x.pixels.scale(w), gt.b.pixels.scale(w)))
    }
}

/// Two mixtures drawn independently; the unit the unsupervised objective
/// consumes. Carries pixels only, never ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePair<T> {
    pub y1: Image<T>,
    pub y2: Image<T>,
    /// Dataset indices of `y1` and `y2`.
    pub provenance: (usize, usize),
}

impl<T: Scalar> MixturePair<T> {
    pub fn new(y1: Image<T>, y2: Image<T>) -> Self {
        MixturePair {
            y1,
            y2,
            provenance: (0, 0),
        }
    }
}
