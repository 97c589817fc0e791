//! The least-squares critic and every loss term of the objective.

mod discriminator;
mod losses;

pub use discriminator::Discriminator;
pub use losses::{
    confusion_loss, cycle_distance_flat, cycle_loss, disc_loss, energy_equity_flat, energy_equity_loss,
    lsgan_confusion_scores, lsgan_disc_scores, total_masker_loss, CycleNorm, LossWeights,
};
