use std::sync::atomic::{AtomicU64, Ordering};

use super::mlp::{Activation, Mlp, MlpTape};
use super::modulated::{FieldTape, ModulatedField};
use super::{add_dense_grads, Representation};
use crate::config::ModelConfig;
use crate::diff_core::{Matrix, ParamBlock, Real, Rng};
use crate::error::{NvpError, Result};
use crate::latent_grids::{AxisPair, KeyframeGrid, SparseGrid3D};
use crate::video_io::Coordinate;

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// Latent-to-RGB head.
#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Modulated(ModulatedField),
    /// Unmodulated LeakyReLU MLP on `[z, t]`.
    Plain(Mlp),
}

impl Head {
    pub fn params(&self) -> Vec<&ParamBlock> {
        match self {
            Head::Modulated(f) => f.params(),
            Head::Plain(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamBlock> {
        match self {
            Head::Modulated(f) => f.params_mut(),
            Head::Plain(m) => m.params_mut(),
        }
    }
}

/// Keyframes + sparse grid + field head.
#[derive(Debug, Clone)]
pub struct NvpModel {
    pub config: ModelConfig,
    /// `xy`, `xt`, `yt` in that order; empty when keyframes are disabled.
    pub keyframes: Vec<KeyframeGrid>,
    pub sparse: Option<SparseGrid3D>,
    pub head: Head,
    generation: u64,
}

impl PartialEq for NvpModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.keyframes == other.keyframes
            && self.sparse == other.sparse
            && self.head == other.head
    }
}

enum HeadTape {
    Modulated(FieldTape),
    Plain(MlpTape),
}

pub struct NvpTape {
    generation: u64,
    coords: Vec<Coordinate>,
    head: HeadTape,
}

/// Gradient contribution of one batch chunk.
pub struct NvpGrads {
    head: Vec<Matrix>,
    coords: Vec<Coordinate>,
    dz: Matrix,
}

impl NvpGrads {
    /// Gradient with respect to the latent vector, one row per coordinate.
    pub fn latent(&self) -> &Matrix {
        &self.dz
    }
}

impl NvpModel {
    /// Builds a model with every parameter zero. See
    /// [`crate::trainer::init_model`] for the training initialization.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let keyframes = if config.keyframes {
            AxisPair::ALL
                .iter()
                .map(|&pair| {
                    KeyframeGrid::new(
                        pair,
                        config.levels,
                        config.level_scale,
                        (config.base_resolution, config.base_resolution),
                        config.keyframe_dim,
                    )
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let sparse = if config.sparse {
            Some(SparseGrid3D::new(
                config.sparse_shape,
                config.sparse_dim,
                config.window,
                config.upsample,
            )?)
        } else {
            None
        };
        let z_dim = config.z_dim();
        let head = if config.modulation {
            Head::Modulated(ModulatedField::new(
                z_dim,
                config.depth,
                config.hidden,
                &config.sigmas,
                config.leaky_slope,
            )?)
        } else {
            let mut dims = vec![z_dim + 1];
            dims.extend(std::iter::repeat(config.hidden).take(config.depth - 1));
            dims.push(3);
            Head::Plain(Mlp::new(
                "plain",
                &dims,
                Activation::LeakyRelu(config.leaky_slope),
                Activation::Identity,
            ))
        };
        Ok(NvpModel {
            config,
            keyframes,
            sparse,
            head,
            generation: next_generation(),
        })
    }

    /// Grids ~ U(-grid_bound, grid_bound), SIREN synthesizer, Kaiming modulator.
    pub fn init(&mut self, rng: &mut Rng, grid_bound: Real) {
        self.generation = next_generation();
        for kf in &mut self.keyframes {
            kf.init_uniform(rng, grid_bound);
        }
        if let Some(s) = &mut self.sparse {
            s.init_uniform(rng, grid_bound);
        }
        match &mut self.head {
            Head::Modulated(f) => f.init(rng),
            Head::Plain(m) => {
                for l in &mut m.layers {
                    l.init_kaiming_normal(rng);
                }
            }
        }
    }

    pub fn z_dim(&self) -> usize {
        self.config.z_dim()
    }

    /// Fills row `r` of `z` with the latent vector of `c`.
    fn gather(&self, c: &Coordinate, row: &mut [Real]) {
        let mut off = 0;
        for kf in &self.keyframes {
            let (a, b) = kf.axis_pair.project(c);
            let n = kf.output_dim();
            kf.lookup_into(a, b, &mut row[off..off + n]);
            off += n;
        }
        if let Some(s) = &self.sparse {
            s.lookup_into(c, &mut row[off..off + s.output_dim()]);
        }
    }

    /// Latent vectors `[z_xy, z_xt, z_yt, z_xyt]`, one row per coordinate.
    pub fn latents(&self, coords: &[Coordinate]) -> Result<Matrix> {
        let mut z = Matrix::zeros(coords.len(), self.z_dim());
        for (r, c) in coords.iter().enumerate() {
            c.validate()?;
            self.gather(c, z.row_mut(r));
        }
        Ok(z)
    }

    fn scatter(&mut self, c: &Coordinate, row: &[Real]) {
        let mut off = 0;
        for kf in &mut self.keyframes {
            let (a, b) = kf.axis_pair.project(c);
            let n = kf.output_dim();
            kf.scatter_from(a, b, &row[off..off + n]);
            off += n;
        }
        if let Some(s) = &mut self.sparse {
            let n = s.output_dim();
            s.scatter_from(c, &row[off..off + n]);
        }
    }

    pub fn grid_params(&self) -> usize {
        self.keyframes.iter().map(|k| k.param_count()).sum::<usize>()
            + self.sparse.as_ref().map_or(0, |s| s.param_count())
    }

    pub fn field_params(&self) -> usize {
        self.head.params().iter().map(|p| p.len()).sum()
    }
}

impl Representation for NvpModel {
    type Tape = NvpTape;
    type Grads = NvpGrads;

    fn forward(&self, coords: &[Coordinate]) -> Result<(Matrix, NvpTape)> {
        let z = self.latents(coords)?;
        let t = Matrix::from_vec(coords.len(), 1, coords.iter().map(|c| c.t).collect())?;
        let (out, head) = match &self.head {
            Head::Modulated(f) => {
                let (out, tape) = f.forward(&z, &t)?;
                (out, HeadTape::Modulated(tape))
            }
            Head::Plain(m) => {
                let zd = z.cols();
                let mut input = Matrix::zeros(z.rows(), zd + 1);
                for r in 0..z.rows() {
                    input.row_mut(r)[..zd].copy_from_slice(z.row(r));
                    input.set(r, zd, t.get(r, 0));
                }
                let (out, tape) = m.forward(&input)?;
                (out, HeadTape::Plain(tape))
            }
        };
        Ok((
            out,
            NvpTape {
                generation: self.generation,
                coords: coords.to_vec(),
                head,
            },
        ))
    }

    fn backward(&self, tape: &NvpTape, upstream: &Matrix) -> Result<NvpGrads> {
        if tape.generation != self.generation {
            return Err(NvpError::StaleTape(
                "parameters changed since the forward pass".into(),
            ));
        }
        if upstream.rows() != tape.coords.len() || upstream.cols() != 3 {
            return Err(NvpError::shape(
                "nvp backward upstream",
                format!("{}x3", tape.coords.len()),
                format!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        let (head, dz) = match (&self.head, &tape.head) {
            (Head::Modulated(f), HeadTape::Modulated(t)) => f.backward(t, upstream)?,
            (Head::Plain(m), HeadTape::Plain(t)) => {
                let (g, dx) = m.backward(t, upstream)?;
                let zd = self.z_dim();
                let mut dz = Matrix::zeros(dx.rows(), zd);
                for r in 0..dx.rows() {
                    dz.row_mut(r).copy_from_slice(&dx.row(r)[..zd]);
                }
                (g, dz)
            }
            _ => return Err(NvpError::StaleTape("tape from a different head".into())),
        };
        Ok(NvpGrads {
            head,
            coords: tape.coords.clone(),
            dz,
        })
    }

    fn accumulate(&mut self, grads: NvpGrads) -> Result<()> {
        add_dense_grads(self.head.params_mut(), &grads.head)?;
        for (r, c) in grads.coords.iter().enumerate() {
            self.scatter(c, grads.dz.row(r));
        }
        Ok(())
    }

    fn params(&self) -> Vec<&ParamBlock> {
        let mut out: Vec<&ParamBlock> = self.keyframes.iter().flat_map(|k| k.params()).collect();
        if let Some(s) = &self.sparse {
            out.extend(s.params());
        }
        out.extend(self.head.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut ParamBlock> {
        self.generation = next_generation();
        let mut out: Vec<&mut ParamBlock> = self
            .keyframes
            .iter_mut()
            .flat_map(|k| k.params_mut())
            .collect();
        if let Some(s) = &mut self.sparse {
            out.extend(s.params_mut());
        }
        out.extend(self.head.params_mut());
        out
    }
}

/// Single-coordinate forward pass.
pub fn nvp_forward(m: &NvpModel, c: &Coordinate) -> Result<([Real; 3], NvpTape)> {
    let (out, tape) = m.forward(std::slice::from_ref(c))?;
    Ok(([out.get(0, 0), out.get(0, 1), out.get(0, 2)], tape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    fn small_config() -> ModelConfig {
        let mut cfg = ModelConfig::for_video(4, 8, 8, Preset::S);
        cfg.levels = 2;
        cfg.base_resolution = 3;
        cfg.hidden = 8;
        cfg
    }

    #[test]
    fn zero_grids_give_final_bias() {
        let mut m = NvpModel::new(small_config()).unwrap();
        if let Head::Modulated(f) = &mut m.head {
            f.synth.last_mut().unwrap().bias.value =
                Matrix::from_rows(&[&[0.5, 0.5, 0.5]]);
        }
        for c in [Coordinate::new(0.1, 0.2, 0.3), Coordinate::new(1.0, 0.0, 0.5)] {
            let (rgb, _) = nvp_forward(&m, &c).unwrap();
            assert_eq!(rgb, [0.5; 3]);
        }
    }

    #[test]
    fn param_count_matches_config() {
        for modulation in [true, false] {
            let mut cfg = small_config();
            cfg.modulation = modulation;
            let m = NvpModel::new(cfg.clone()).unwrap();
            assert_eq!(m.param_count(), cfg.param_count());
            assert_eq!(m.field_params(), cfg.field_params());
        }
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut m = NvpModel::new(small_config()).unwrap();
        m.init(&mut Rng::new(0), 1e-4);
        let (_, tape) = nvp_forward(&m, &Coordinate::new(0.5, 0.5, 0.5)).unwrap();
        m.params_mut()[0].value.set(0, 0, 1.0);
        let up = Matrix::zeros(1, 3);
        assert!(matches!(m.backward(&tape, &up), Err(NvpError::StaleTape(_))));
    }

    #[test]
    fn same_cells_differ_only_through_t() {
        // Keyframe and sparse cells plus fractional offsets identical in x, y.
        let mut cfg = small_config();
        cfg.keyframes = false;
        let mut m = NvpModel::new(cfg).unwrap();
        m.init(&mut Rng::new(1), 0.5);
        let a = Coordinate::new(0.3, 0.6, 0.51);
        let b = Coordinate::new(0.3, 0.6, 0.74);
        // Both t values fall in sparse t-cell 2 of 4.
        let za = m.latents(&[a]).unwrap();
        let zb = m.latents(&[b]).unwrap();
        assert_eq!(za, zb);
        assert_ne!(nvp_forward(&m, &a).unwrap().0, nvp_forward(&m, &b).unwrap().0);
    }

    #[test]
    fn rejects_out_of_range_coordinates() {
        let m = NvpModel::new(small_config()).unwrap();
        assert!(nvp_forward(&m, &Coordinate::new(0.0, 0.0, 1.2)).is_err());
    }
}
