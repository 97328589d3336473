//! The voxel-wise harmonization network.
//!
//! A fully connected network maps a voxel's 45 source SH coefficients to five
//! order scales; the harmonized coefficients are the source coefficients
//! multiplied block-wise by those scales.

mod adam;
mod network;
mod train;

pub use adam::{adam_step, AdamState};
pub use network::{Architecture, Dense, Gradients, MlpParams};
pub use train::{
    apply_volume, harmonize_voxel, masked_c0, median_scales, percentile, select_training_voxels,
    train, train_with, TrainConfig, TrainOutput, TrainingSet, LOG_INTERVAL,
};

use crate::error::Result;

/// Seeded initialization of the full-size network.
pub fn init_params(seed: u64) -> Result<MlpParams> {
    MlpParams::init(&Architecture::harp(), seed)
}
