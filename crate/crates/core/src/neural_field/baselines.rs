//! Coordinate-only baselines: a sinusoidal MLP on `(x, y, t)` and a ReLU MLP
//! on random Fourier features.

use super::mlp::{Activation, Mlp, MlpTape};
use super::model::NvpModel;
use super::{add_dense_grads, Representation};
use crate::diff_core::{Matrix, ParamBlock, Real, Rng};
use crate::error::{NvpError, Result};
use crate::video_io::Coordinate;

const TAU: Real = std::f64::consts::TAU as Real;

fn coord_matrix(coords: &[Coordinate]) -> Result<Matrix> {
    let mut x = Matrix::zeros(coords.len(), 3);
    for (r, c) in coords.iter().enumerate() {
        c.validate()?;
        x.row_mut(r).copy_from_slice(&[c.x, c.y, c.t]);
    }
    Ok(x)
}

/// Sinusoidal MLP with frequency `omega` on every hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Siren {
    pub net: Mlp,
    pub omega: Real,
}

impl Siren {
    /// `depth` affine layers of width `hidden`; the last one is linear.
    pub fn new(depth: usize, hidden: usize, omega: Real, rng: &mut Rng) -> Result<Self> {
        if depth < 2 || hidden == 0 {
            return Err(NvpError::Config("SIREN needs depth >= 2 and hidden > 0".into()));
        }
        let mut dims = vec![3];
        dims.extend(std::iter::repeat(hidden).take(depth - 1));
        dims.push(3);
        let mut net = Mlp::new("siren", &dims, Activation::Sine(omega), Activation::Identity);
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let n = layer.input_dim() as Real;
            let bound = if k == 0 {
                1.0 / n
            } else {
                (6.0 / n).sqrt() / omega
            };
            layer.init_uniform(rng, bound, 1.0 / n.sqrt());
        }
        Ok(Siren { net, omega })
    }
}

impl Representation for Siren {
    type Tape = MlpTape;
    type Grads = Vec<Matrix>;

    fn forward(&self, coords: &[Coordinate]) -> Result<(Matrix, MlpTape)> {
        self.net.forward(&coord_matrix(coords)?)
    }

    fn backward(&self, tape: &MlpTape, upstream: &Matrix) -> Result<Vec<Matrix>> {
        Ok(self.net.backward(tape, upstream)?.0)
    }

    fn accumulate(&mut self, grads: Vec<Matrix>) -> Result<()> {
        add_dense_grads(self.net.params_mut(), &grads)
    }

    fn params(&self) -> Vec<&ParamBlock> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut ParamBlock> {
        self.net.params_mut()
    }
}

/// `[sin(2 pi W z), cos(2 pi W z)]` for a `features x 3` projection `W`.
pub fn rff_embed(projection: &Matrix, z: &Matrix) -> Result<Matrix> {
    let mut phase = Matrix::zeros(z.rows(), projection.rows());
    Matrix::gemm(TAU, z, false, projection, true, 0.0, &mut phase)?;
    let m = projection.rows();
    let mut out = Matrix::zeros(z.rows(), 2 * m);
    for r in 0..z.rows() {
        let (s, c) = out.row_mut(r).split_at_mut(m);
        for ((sv, cv), p) in s.iter_mut().zip(c.iter_mut()).zip(phase.row(r)) {
            let (a, b) = p.sin_cos();
            *sv = a;
            *cv = b;
        }
    }
    Ok(out)
}

/// ReLU MLP on a fixed random Fourier feature embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Ffn {
    /// `features x 3`, entries ~ N(0, sigma^2); not trained.
    pub projection: Matrix,
    pub net: Mlp,
}

impl Ffn {
    pub fn new(
        features: usize,
        sigma: Real,
        depth: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if depth < 2 || hidden == 0 || features == 0 {
            return Err(NvpError::Config(
                "FFN needs features > 0, depth >= 2 and hidden > 0".into(),
            ));
        }
        let mut projection = Matrix::zeros(features, 3);
        for v in projection.as_mut_slice() {
            *v = rng.normal(0.0, sigma);
        }
        let mut dims = vec![2 * features];
        dims.extend(std::iter::repeat(hidden).take(depth - 1));
        dims.push(3);
        let mut net = Mlp::new("ffn", &dims, Activation::Relu, Activation::Identity);
        for layer in &mut net.layers {
            layer.init_kaiming_normal(rng);
        }
        Ok(Ffn { projection, net })
    }
}

impl Representation for Ffn {
    type Tape = MlpTape;
    type Grads = Vec<Matrix>;

    fn forward(&self, coords: &[Coordinate]) -> Result<(Matrix, MlpTape)> {
        let emb = rff_embed(&self.projection, &coord_matrix(coords)?)?;
        self.net.forward(&emb)
    }

    fn backward(&self, tape: &MlpTape, upstream: &Matrix) -> Result<Vec<Matrix>> {
        Ok(self.net.backward(tape, upstream)?.0)
    }

    fn accumulate(&mut self, grads: Vec<Matrix>) -> Result<()> {
        add_dense_grads(self.net.params_mut(), &grads)
    }

    fn params(&self) -> Vec<&ParamBlock> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut ParamBlock> {
        self.net.params_mut()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Siren,
    Ffn,
    /// The full model with the modulated field replaced by a plain MLP.
    PlainHead,
}

/// Evaluates one of the baseline networks; `plain_head` must be built with
/// `modulation = false`.
pub fn baseline_forward(
    kind: BaselineKind,
    siren: Option<&Siren>,
    ffn: Option<&Ffn>,
    plain_head: Option<&NvpModel>,
    coords: &[Coordinate],
) -> Result<Matrix> {
    let missing = |what: &str| NvpError::Config(format!("no {what} network supplied"));
    match kind {
        BaselineKind::Siren => siren.ok_or_else(|| missing("SIREN"))?.predict(coords),
        BaselineKind::Ffn => ffn.ok_or_else(|| missing("FFN"))?.predict(coords),
        BaselineKind::PlainHead => {
            let m = plain_head.ok_or_else(|| missing("plain-head"))?;
            if m.config.modulation {
                return Err(NvpError::Config("plain-head baseline needs modulation = false".into()));
            }
            m.predict(coords)
        }
    }
}
