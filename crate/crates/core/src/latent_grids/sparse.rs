use super::cell;
use crate::diff_core::{ParamBlock, Real, Rng};
use crate::error::{NvpError, Result};
use crate::video_io::Coordinate;

/// Coarse 3D grid of `D`-dimensional codes over `(x, y, t)`.
///
/// A lookup gathers a `h x w x s` window of codes anchored at the cell
/// containing the coordinate and extending forward along each axis, clamped at
/// the far edges. In upsampled mode each tap is instead the trilinear
/// interpolation of the grid at the tap's continuous position.
///
/// Codes are stored in one [`ParamBlock`] with `nx * ny * nt` rows, row
/// `(i * ny + j) * nt + k` holding `u_{ijk}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGrid3D {
    /// Cells along `(x, y, t)`.
    pub shape: [usize; 3],
    pub latent_dim: usize,
    /// Window extent along `(x, y, t)`.
    pub window: [usize; 3],
    pub upsample: bool,
    pub codes: ParamBlock,
}

impl SparseGrid3D {
    pub fn new(
        shape: [usize; 3],
        latent_dim: usize,
        window: [usize; 3],
        upsample: bool,
    ) -> Result<Self> {
        if shape.contains(&0) || window.contains(&0) || latent_dim == 0 {
            return Err(NvpError::Config(format!(
                "sparse grid needs positive shape, window and latent dim \
                 (got shape={shape:?}, window={window:?}, D={latent_dim})"
            )));
        }
        if window.iter().zip(&shape).any(|(w, s)| w > s) {
            return Err(NvpError::Config(format!(
                "sparse window {window:?} exceeds grid shape {shape:?}"
            )));
        }
        let cells = shape.iter().product();
        Ok(SparseGrid3D {
            shape,
            latent_dim,
            window,
            upsample,
            codes: ParamBlock::zeros("sparse.codes", cells, latent_dim),
        })
    }

    pub fn taps(&self) -> usize {
        self.window.iter().product()
    }

    /// Length of the looked-up vector, `h * w * s * D`.
    pub fn output_dim(&self) -> usize {
        self.taps() * self.latent_dim
    }

    pub fn param_count(&self) -> usize {
        self.codes.len()
    }

    pub fn init_uniform(&mut self, rng: &mut Rng, bound: Real) {
        for v in self.codes.value.as_mut_slice() {
            *v = rng.uniform(-bound, bound);
        }
    }

    /// Code row of cell `(i, j, k)` along `(x, y, t)`.
    pub fn cell_row(&self, i: usize, j: usize, k: usize) -> usize {
        self.layout().row(i, j, k)
    }

    fn layout(&self) -> Layout {
        Layout {
            shape: self.shape,
            window: self.window,
            upsample: self.upsample,
        }
    }

    /// Window lookup into `out` (length `h * w * s * D`).
    pub fn lookup_into(&self, c: &Coordinate, out: &mut [Real]) {
        let d = self.latent_dim;
        out[..self.output_dim()].iter_mut().for_each(|v| *v = 0.0);
        let codes = self.codes.value.as_slice();
        self.layout().for_each_source(c, |tap, row, wt| {
            let dst = &mut out[tap * d..(tap + 1) * d];
            let src = &codes[row * d..(row + 1) * d];
            for (o, v) in dst.iter_mut().zip(src) {
                *o += wt * v;
            }
        });
    }

    /// Adjoint of [`Self::lookup_into`]: adds `upstream` into the code gradients.
    pub fn scatter_from(&mut self, c: &Coordinate, upstream: &[Real]) {
        let d = self.latent_dim;
        let layout = self.layout();
        let grad = self.codes.grad.as_mut_slice();
        layout.for_each_source(c, |tap, row, wt| {
            let src = &upstream[tap * d..(tap + 1) * d];
            for (o, v) in grad[row * d..(row + 1) * d].iter_mut().zip(src) {
                *o += wt * v;
            }
        });
    }

    pub fn params(&self) -> impl Iterator<Item = &ParamBlock> {
        std::iter::once(&self.codes)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut ParamBlock> {
        std::iter::once(&mut self.codes)
    }
}

#[derive(Clone, Copy)]
struct Layout {
    shape: [usize; 3],
    window: [usize; 3],
    upsample: bool,
}

impl Layout {
    #[inline]
    fn row(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.shape[1] + j) * self.shape[2] + k
    }

    /// Calls `visit(tap, row, weight)` for every code contributing to each tap,
    /// in the canonical tap order (x-major, then y, then t).
    #[inline]
    fn for_each_source(&self, c: &Coordinate, mut visit: impl FnMut(usize, usize, Real)) {
        let [nx, ny, nt] = self.shape;
        let [h, w, s] = self.window;
        if !self.upsample {
            let (m, _, _) = cell(c.x, nx);
            let (n, _, _) = cell(c.y, ny);
            let (k, _, _) = cell(c.t, nt);
            let mut tap = 0;
            for i in 0..h {
                let ii = (m + i).min(nx - 1);
                for j in 0..w {
                    let jj = (n + j).min(ny - 1);
                    for q in 0..s {
                        let kk = (k + q).min(nt - 1);
                        visit(tap, self.row(ii, jj, kk), 1.0);
                        tap += 1;
                    }
                }
            }
        } else {
            let axis = |pos: Real, n: usize, offset: usize| -> (usize, usize, Real) {
                let p = pos * n as Real - 0.5 + offset as Real;
                let p0 = p.floor();
                let f = p - p0;
                let lo = (p0.max(0.0) as usize).min(n - 1);
                let hi = ((p0 + 1.0).max(0.0) as usize).min(n - 1);
                (lo, hi, f)
            };
            let mut tap = 0;
            for i in 0..h {
                let (x0, x1, fx) = axis(c.x, nx, i);
                for j in 0..w {
                    let (y0, y1, fy) = axis(c.y, ny, j);
                    for q in 0..s {
                        let (t0, t1, ft) = axis(c.t, nt, q);
                        for (xi, wx) in [(x0, 1.0 - fx), (x1, fx)] {
                            for (yi, wy) in [(y0, 1.0 - fy), (y1, fy)] {
                                for (ti, wt) in [(t0, 1.0 - ft), (t1, ft)] {
                                    visit(tap, self.row(xi, yi, ti), wx * wy * wt);
                                }
                            }
                        }
                        tap += 1;
                    }
                }
            }
        }
    }
}

pub fn sparse_lookup(g: &SparseGrid3D, c: &Coordinate) -> Result<Vec<Real>> {
    c.validate()?;
    let mut out = vec![0.0; g.output_dim()];
    g.lookup_into(c, &mut out);
    Ok(out)
}

pub fn sparse_scatter(g: &mut SparseGrid3D, c: &Coordinate, upstream: &[Real]) -> Result<()> {
    c.validate()?;
    if upstream.len() != g.output_dim() {
        return Err(NvpError::shape("sparse_scatter", g.output_dim(), upstream.len()));
    }
    g.scatter_from(c, upstream);
    Ok(())
}
