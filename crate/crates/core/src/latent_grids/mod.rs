//! Learnable positional features.
//!
//! Two grid families feed the field network: multi-resolution 2D keyframes
//! with bilinear lookup ([`KeyframeGrid`]) and a coarse 3D grid whose lookup
//! concatenates a forward window of neighboring codes ([`SparseGrid3D`]).
//! Both expose a forward lookup and its exact adjoint, which scatters an
//! upstream gradient back into the codes' gradient buffers.

mod keyframe;
mod sparse;

pub use keyframe::{keyframe_lookup, keyframe_scatter, level_resolutions, AxisPair, KeyframeGrid};
pub use sparse::{sparse_lookup, sparse_scatter, SparseGrid3D};

use crate::diff_core::Real;
use crate::error::{NvpError, Result};

/// Floor index into `n` cells for a coordinate in `[0, 1]`, clamped to the
/// last cell, with the fractional offset measured from that index.
#[inline]
pub(crate) fn cell(pos: Real, n: usize) -> (usize, usize, Real) {
    let scaled = pos * n as Real;
    let m = (scaled.floor().max(0.0) as usize).min(n - 1);
    let next = (m + 1).min(n - 1);
    (m, next, scaled - m as Real)
}

pub(crate) fn check_unit(name: &'static str, v: Real) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(NvpError::OutOfRange(name, format!("{v} not in [0, 1]")))
    }
}
