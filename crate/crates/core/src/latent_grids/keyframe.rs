use std::fmt;
use std::str::FromStr;

use super::{cell, check_unit};
use crate::diff_core::{Matrix, ParamBlock, Real, Rng};
use crate::error::{NvpError, Result};
use crate::video_io::Coordinate;

/// Which two coordinates a keyframe is indexed by. The third axis is the one
/// the keyframe is shared over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AxisPair {
    Xy,
    Xt,
    Yt,
}

impl AxisPair {
    pub const ALL: [AxisPair; 3] = [AxisPair::Xy, AxisPair::Xt, AxisPair::Yt];

    /// Projects a coordinate onto this keyframe's `(a, b)` plane.
    #[inline]
    pub fn project(self, c: &Coordinate) -> (Real, Real) {
        match self {
            AxisPair::Xy => (c.x, c.y),
            AxisPair::Xt => (c.x, c.t),
            AxisPair::Yt => (c.y, c.t),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AxisPair::Xy => "xy",
            AxisPair::Xt => "xt",
            AxisPair::Yt => "yt",
        }
    }
}

impl fmt::Display for AxisPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AxisPair {
    type Err = NvpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xy" => Ok(AxisPair::Xy),
            "xt" => Ok(AxisPair::Xt),
            "yt" => Ok(AxisPair::Yt),
            other => Err(NvpError::Config(format!("unknown axis pair `{other}`"))),
        }
    }
}

/// `(floor(gamma^(l-1) * base_h), floor(gamma^(l-1) * base_w))` for `l = 1..=levels`.
pub fn level_resolutions(
    levels: usize,
    gamma: f64,
    base: (usize, usize),
) -> Vec<(usize, usize)> {
    (0..levels)
        .map(|l| {
            let s = gamma.powi(l as i32);
            (
                (s * base.0 as f64).floor() as usize,
                (s * base.1 as f64).floor() as usize,
            )
        })
        .collect()
}

/// Multi-level 2D grid of `C`-dimensional latent codes.
///
/// Level `l` is stored as one [`ParamBlock`] of shape `(H_l * W_l) x C`, row
/// `m * W_l + n` holding code `u_{mn}`.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeGrid {
    pub axis_pair: AxisPair,
    pub gamma: f64,
    pub base: (usize, usize),
    pub latent_dim: usize,
    dims: Vec<(usize, usize)>,
    pub levels: Vec<ParamBlock>,
}

impl KeyframeGrid {
    pub fn new(
        axis_pair: AxisPair,
        levels: usize,
        gamma: f64,
        base: (usize, usize),
        latent_dim: usize,
    ) -> Result<Self> {
        if levels == 0 || latent_dim == 0 || base.0 == 0 || base.1 == 0 {
            return Err(NvpError::Config(format!(
                "keyframe needs positive levels, latent dim and base resolution \
                 (got L={levels}, C={latent_dim}, base={base:?})"
            )));
        }
        if !(gamma >= 1.0) {
            return Err(NvpError::Config(format!("level scale must be >= 1, got {gamma}")));
        }
        let dims = level_resolutions(levels, gamma, base);
        let blocks = dims
            .iter()
            .enumerate()
            .map(|(l, (h, w))| {
                ParamBlock::zeros(format!("keyframe.{axis_pair}.level{l}"), h * w, latent_dim)
            })
            .collect();
        Ok(KeyframeGrid {
            axis_pair,
            gamma,
            base,
            latent_dim,
            dims,
            levels: blocks,
        })
    }

    pub fn level_count(&self) -> usize {
        self.dims.len()
    }

    pub fn level_dims(&self) -> &[(usize, usize)] {
        &self.dims
    }

    /// Length of the looked-up vector, `L * C`.
    pub fn output_dim(&self) -> usize {
        self.dims.len() * self.latent_dim
    }

    pub fn param_count(&self) -> usize {
        self.levels.iter().map(|p| p.len()).sum()
    }

    pub fn init_uniform(&mut self, rng: &mut Rng, bound: Real) {
        for p in &mut self.levels {
            for v in p.value.as_mut_slice() {
                *v = rng.uniform(-bound, bound);
            }
        }
    }

    /// Bilinear lookup at `(a, b)` across all levels, coarse to fine, into `out`.
    pub fn lookup_into(&self, a: Real, b: Real, out: &mut [Real]) {
        let c = self.latent_dim;
        for (l, ((h, w), block)) in self.dims.iter().zip(&self.levels).enumerate() {
            let (m0, m1, fa) = cell(a, *h);
            let (n0, n1, fb) = cell(b, *w);
            let codes = block.value.as_slice();
            let dst = &mut out[l * c..(l + 1) * c];
            let corners = [
                ((m0 * w + n0) * c, (1.0 - fa) * (1.0 - fb)),
                ((m0 * w + n1) * c, (1.0 - fa) * fb),
                ((m1 * w + n0) * c, fa * (1.0 - fb)),
                ((m1 * w + n1) * c, fa * fb),
            ];
            for (k, d) in dst.iter_mut().enumerate() {
                *d = corners.iter().map(|(o, wt)| wt * codes[o + k]).sum();
            }
        }
    }

    /// Adjoint of [`Self::lookup_into`]: adds `upstream` into the level gradients.
    pub fn scatter_from(&mut self, a: Real, b: Real, upstream: &[Real]) {
        let c = self.latent_dim;
        for (l, ((h, w), block)) in self.dims.iter().zip(self.levels.iter_mut()).enumerate() {
            let (m0, m1, fa) = cell(a, *h);
            let (n0, n1, fb) = cell(b, *w);
            let grad = block.grad.as_mut_slice();
            let src = &upstream[l * c..(l + 1) * c];
            let corners = [
                ((m0 * w + n0) * c, (1.0 - fa) * (1.0 - fb)),
                ((m0 * w + n1) * c, (1.0 - fa) * fb),
                ((m1 * w + n0) * c, fa * (1.0 - fb)),
                ((m1 * w + n1) * c, fa * fb),
            ];
            for (o, wt) in corners {
                for (k, g) in src.iter().enumerate() {
                    grad[o + k] += wt * g;
                }
            }
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &ParamBlock> {
        self.levels.iter()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut ParamBlock> {
        self.levels.iter_mut()
    }

    /// Level `l` as an `H_l x W_l x C` code array (row-major).
    pub fn level_codes(&self, l: usize) -> &Matrix {
        &self.levels[l].value
    }
}

/// Checked lookup returning the concatenated `L * C` latent vector.
pub fn keyframe_lookup(g: &KeyframeGrid, a: Real, b: Real) -> Result<Vec<Real>> {
    check_unit("keyframe coordinate a", a)?;
    check_unit("keyframe coordinate b", b)?;
    let mut out = vec![0.0; g.output_dim()];
    g.lookup_into(a, b, &mut out);
    Ok(out)
}

/// Checked scatter of `upstream` (length `L * C`) into the grid gradients.
pub fn keyframe_scatter(g: &mut KeyframeGrid, a: Real, b: Real, upstream: &[Real]) -> Result<()> {
    check_unit("keyframe coordinate a", a)?;
    check_unit("keyframe coordinate b", b)?;
    if upstream.len() != g.output_dim() {
        return Err(NvpError::shape("keyframe_scatter", g.output_dim(), upstream.len()));
    }
    g.scatter_from(a, b, upstream);
    Ok(())
}
