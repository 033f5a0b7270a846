//! Neural video representation: learnable latent keyframes and a sparse 3D
//! feature grid, decoded by a time-conditioned sinusoidal network whose
//! hidden units are gated by the latent features.
//!
//! The pipeline is
//!
//! 1. [`video_io`] loads frames into a [`video_io::VideoTensor`];
//! 2. [`trainer::train`] fits an [`neural_field::NvpModel`] with hand-written
//!    gradients ([`diff_core`]) and AdamW;
//! 3. [`codec`] stores it as NVPM, or quantizes and compresses the grids into
//!    an NVPC container;
//! 4. [`metrics`] scores reconstructions.

pub mod ablation;
pub mod codec;
pub mod config;
pub mod diff_core;
pub mod error;
pub mod latent_grids;
pub mod metrics;
pub mod neural_field;
pub mod trainer;
pub mod video_io;

pub use config::{ModelConfig, Preset, TrainConfig};
pub use diff_core::{Matrix, Real, Rng};
pub use error::{NvpError, Result};
pub use neural_field::{NvpModel, Representation};
pub use video_io::{Coordinate, PixelMask, VideoTensor};
