//! Minimal numerical kernel: dense row-major matrices, differentiable
//! primitives with hand-written backward passes, AdamW, the cosine schedule
//! and a counter-based RNG.
//!
//! Precision is a build mode. The default is `f64`; enabling the `f32`
//! feature switches [`Real`] for faster training. Nothing mixes the two.

mod matrix;
pub(crate) mod ops;
mod optim;
mod rng;

pub use matrix::Matrix;
pub use ops::{
    leaky_relu, leaky_relu_backward, linear_backward, linear_forward, sin_act, sin_act_backward,
    LEAKY_SLOPE,
};
pub use optim::{adamw_step, cosine_lr, AdamW, ParamBlock};
pub use rng::Rng;

/// Scalar type used throughout the crate.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
/// Scalar type used throughout the crate.
#[cfg(feature = "f32")]
pub type Real = f32;
