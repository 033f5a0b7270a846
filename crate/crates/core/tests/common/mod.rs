//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use nvp::config::{ModelConfig, Preset};
use nvp::diff_core::{Matrix, Real, Rng};
use nvp::latent_grids::{KeyframeGrid, SparseGrid3D};
use nvp::neural_field::Representation;
use nvp::video_io::Coordinate;

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const FD_FLOOR: f64 = 1e-6;
/// Disagreement between step sizes that marks a non-smooth interval.
pub const KINK_TOL: f64 = 1e-4;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

pub fn random_coords(rng: &mut Rng, n: usize) -> Vec<Coordinate> {
    (0..n)
        .map(|_| Coordinate::new(rng.unit(), rng.unit(), rng.unit()))
        .collect()
}

/// `sum(W .* R(coords))` for a fixed weight matrix `W`.
fn weighted_output<R: Representation>(m: &R, coords: &[Coordinate], w: &Matrix) -> f64 {
    let out = m.predict(coords).expect("forward");
    out.frobenius_dot(w) as f64
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheck {
    /// Worst relative error over the smooth samples.
    pub worst: f64,
    pub checked: usize,
    /// Samples whose `[x - h, x + h]` interval straddles a kink (LeakyReLU,
    /// nearest-cell taps), where central differences are meaningless.
    pub kinked: usize,
}

impl GradCheck {
    pub fn merge(&mut self, other: GradCheck) {
        self.worst = self.worst.max(other.worst);
        self.checked += other.checked;
        self.kinked += other.kinked;
    }
}

/// Compares the accumulated parameter gradient of `sum(W .* R(coords))`
/// against central differences on `samples` random entries per block.
pub fn check_representation<R: Representation + Clone>(
    model: &R,
    coords: &[Coordinate],
    rng: &mut Rng,
    samples: usize,
) -> GradCheck {
    let mut w = Matrix::zeros(coords.len(), 3);
    for v in w.as_mut_slice() {
        *v = rng.uniform(-1.0, 1.0);
    }
    let mut m = model.clone();
    m.zero_grad();
    let (_, tape) = m.forward(coords).expect("forward");
    let grads = m.backward(&tape, &w).expect("backward");
    m.accumulate(grads).expect("accumulate");
    let analytic: Vec<Vec<Real>> = m.params().iter().map(|p| p.grad.as_slice().to_vec()).collect();

    let mut out = GradCheck::default();
    let mut probe = model.clone();
    let mut central = |b: usize, i: usize, h: f64| -> f64 {
        let orig = probe.params()[b].value.as_slice()[i];
        probe.params_mut()[b].value.as_mut_slice()[i] = orig + h as Real;
        let up = weighted_output(&probe, coords, &w);
        probe.params_mut()[b].value.as_mut_slice()[i] = orig - h as Real;
        let down = weighted_output(&probe, coords, &w);
        probe.params_mut()[b].value.as_mut_slice()[i] = orig;
        (up - down) / (2.0 * h)
    };
    for (b, grad) in analytic.iter().enumerate() {
        for _ in 0..samples.min(grad.len()) {
            let i = rng.below(grad.len());
            let numeric = central(b, i, FD_STEP);
            let err = rel_err(grad[i] as f64, numeric);
            // On a smooth interval a 10x smaller step agrees to O(h^2).
            if err > KINK_TOL && rel_err(numeric, central(b, i, FD_STEP / 10.0)) > KINK_TOL {
                out.kinked += 1;
                continue;
            }
            out.checked += 1;
            out.worst = out.worst.max(err);
        }
    }
    out
}

/// A small random architecture covering every switch.
pub fn random_config(rng: &mut Rng) -> ModelConfig {
    let preset = if rng.below(2) == 0 { Preset::S } else { Preset::L };
    let frames = 2 + rng.below(8);
    let side = 4 + rng.below(20);
    let mut cfg = ModelConfig::for_video(frames, side, side + rng.below(8), preset);
    cfg.levels = 1 + rng.below(3);
    cfg.base_resolution = 2 + rng.below(5);
    cfg.level_scale = 1.2 + 0.3 * rng.unit() as f64;
    cfg.keyframe_dim = 1 + rng.below(3);
    cfg.sparse_dim = 1 + rng.below(3);
    cfg.sparse_shape = [3 + rng.below(4), 3 + rng.below(4), 2 + rng.below(4)];
    cfg.window = [
        1 + rng.below(3.min(cfg.sparse_shape[0])),
        1 + rng.below(3.min(cfg.sparse_shape[1])),
        1 + rng.below(2.min(cfg.sparse_shape[2])),
    ];
    cfg.upsample = rng.below(2) == 0;
    cfg.modulation = rng.below(4) != 0;
    match rng.below(6) {
        0 => cfg.keyframes = false,
        1 => cfg.sparse = false,
        _ => {}
    }
    cfg.depth = 2 + rng.below(3);
    cfg.hidden = 3 + rng.below(8);
    cfg.sigmas = (0..cfg.depth - 1)
        .map(|k| if k == 0 { 1.0 + 29.0 * rng.unit() } else { 1.0 })
        .collect();
    cfg.validate().expect("random config is valid");
    cfg
}

/// `<scatter(e), G> - <e, lookup(G)>` for a keyframe grid at `(a, b)`.
pub fn keyframe_adjoint_gap(g: &mut KeyframeGrid, a: Real, b: Real, rng: &mut Rng) -> f64 {
    for p in g.levels.iter_mut() {
        for v in p.value.as_mut_slice() {
            *v = rng.uniform(-1.0, 1.0);
        }
        p.grad.fill(0.0);
    }
    let e: Vec<Real> = (0..g.output_dim()).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let mut out = vec![0.0; g.output_dim()];
    g.lookup_into(a, b, &mut out);
    let rhs: f64 = e.iter().zip(&out).map(|(x, y)| (*x * *y) as f64).sum();
    g.scatter_from(a, b, &e);
    let lhs: f64 = g
        .levels
        .iter()
        .map(|p| p.grad.frobenius_dot(&p.value) as f64)
        .sum();
    (lhs - rhs).abs()
}

/// `<scatter(e), G> - <e, lookup(G)>` for a sparse grid at `c`.
pub fn sparse_adjoint_gap(g: &mut SparseGrid3D, c: &Coordinate, rng: &mut Rng) -> f64 {
    for v in g.codes.value.as_mut_slice() {
        *v = rng.uniform(-1.0, 1.0);
    }
    g.codes.grad.fill(0.0);
    let e: Vec<Real> = (0..g.output_dim()).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let mut out = vec![0.0; g.output_dim()];
    g.lookup_into(c, &mut out);
    let rhs: f64 = e.iter().zip(&out).map(|(x, y)| (*x * *y) as f64).sum();
    g.scatter_from(c, &e);
    let lhs = g.codes.grad.frobenius_dot(&g.codes.value) as f64;
    (lhs - rhs).abs()
}

/// Removes the wall-clock column from a telemetry CSV.
pub fn without_seconds(csv: &str) -> String {
    csv.lines()
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            let mut kept = vec![cols[0]];
            kept.extend(&cols[2..]);
            kept.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}
