//! Latent-to-RGB mapping and complete coordinate networks.
//!
//! [`NvpModel`] combines the three keyframes and the sparse grid with a
//! [`ModulatedField`] (or a plain MLP head for ablations). [`Siren`] and
//! [`Ffn`] are coordinate-only baselines. All of them implement
//! [`Representation`], which is what the trainer drives.

mod baselines;
mod mlp;
mod model;
mod modulated;

pub use baselines::{baseline_forward, rff_embed, BaselineKind, Ffn, Siren};
pub use mlp::{Activation, Dense, Mlp, MlpTape};
pub use model::{nvp_forward, Head, NvpGrads, NvpModel, NvpTape};
pub use modulated::{field_backward, field_forward, FieldTape, ModulatedField};

use crate::diff_core::{Matrix, ParamBlock};
use crate::error::Result;
use crate::video_io::Coordinate;

/// A trainable map from coordinates to RGB.
///
/// Gradients are computed in two phases so batch chunks can be processed in
/// parallel: [`Representation::backward`] is pure and returns a gradient
/// value, and [`Representation::accumulate`] folds those values into the
/// parameter gradient buffers. Folding in a fixed chunk order makes results
/// independent of the number of workers.
pub trait Representation: Send + Sync {
    type Tape: Send;
    type Grads: Send;

    /// Batched forward; returns a `B x 3` matrix of unclamped RGB values.
    fn forward(&self, coords: &[Coordinate]) -> Result<(Matrix, Self::Tape)>;

    fn backward(&self, tape: &Self::Tape, upstream: &Matrix) -> Result<Self::Grads>;

    fn accumulate(&mut self, grads: Self::Grads) -> Result<()>;

    /// All trainable blocks in canonical order.
    fn params(&self) -> Vec<&ParamBlock>;

    /// Mutable access to all trainable blocks. Invalidates outstanding tapes.
    fn params_mut(&mut self) -> Vec<&mut ParamBlock>;

    fn predict(&self, coords: &[Coordinate]) -> Result<Matrix> {
        self.forward(coords).map(|(out, _)| out)
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

/// Adds `grads[i]` into `params[i].grad`.
pub(crate) fn add_dense_grads(params: Vec<&mut ParamBlock>, grads: &[Matrix]) -> Result<()> {
    for (p, g) in params.into_iter().zip(grads) {
        p.grad.add_assign(g)?;
    }
    Ok(())
}
