//! Conditional GAN that predicts per-point colors from point positions.
//!
//! The generator is a PointNet-style segmentation network: a shared per-point
//! encoder, a symmetric max-pool to a global feature, and a per-point decoder
//! fed with the local and global features, ending in `tanh`. The
//! discriminator encodes positions concatenated with colors and maps the
//! pooled feature to one logit. Dropout in the decoder stays active at
//! inference and is the generator's only noise source.

pub mod adam;
pub mod checkpoint;
pub mod data;
pub mod gradcheck;
pub mod loss;
pub mod net;
pub mod scalar;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CheckpointError};
pub use data::{colorize, denormalize_colors, normalize_colors, normalize_positions, ColorCloud};
pub use loss::{gan_losses, softplus, Losses};
pub use net::{
    discriminator_backward, discriminator_forward, generator_backward, generator_forward,
    Architecture, Dense, DropoutMasks, GanParams,
};
pub use scalar::Real;
pub use train::{train, BatchReport, EpochLog, GanConfig, TrainOutcome, TrainState, Trainer};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GanError {
    #[error("non-finite values in {0} activations")]
    NonFinite(&'static str),
    #[error("training diverged in epoch {epoch} ({stage} produced non-finite values)")]
    Diverged { epoch: usize, stage: &'static str },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("point cloud has no colors")]
    Uncolored,
    #[error("{positions} positions but {colors} colors")]
    Shape { positions: usize, colors: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}
