//! Fitting a representation to a video.
//!
//! Each iteration samples a pixel batch, evaluates the network on fixed-size
//! chunks (optionally across worker threads), folds the chunk gradients in
//! chunk order, and takes one AdamW step at the cosine-annealed learning rate.
//! Because chunking does not depend on the worker count, results are bitwise
//! identical for any number of workers.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{ModelConfig, TrainConfig};
use crate::diff_core::{cosine_lr, AdamW, Matrix, Real, Rng};
use crate::error::{NvpError, Result};
use crate::metrics::{psnr_from_mse, sig6};
use crate::neural_field::{NvpModel, Representation};
use crate::video_io::{pixel_to_coord, Coordinate, PixelBatch, PixelMask, PixelSampler, VideoTensor};

/// Grid codes start in `U(-GRID_INIT, GRID_INIT)`.
pub const GRID_INIT: Real = 1e-4;

/// Pixels per gradient chunk.
const CHUNK: usize = 256;
/// Coordinates per forward chunk when rendering.
const RENDER_CHUNK: usize = 4096;

const INIT_STREAM: u64 = 0;
const SAMPLING_STREAM: u64 = 1;

/// Builds and initializes a model deterministically from `seed`.
pub fn init_model(config: ModelConfig, seed: u64) -> Result<NvpModel> {
    let mut m = NvpModel::new(config)?;
    let mut rng = Rng::new(seed).fork(INIT_STREAM);
    m.init(&mut rng, GRID_INIT);
    Ok(m)
}

/// One telemetry row.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub iteration: usize,
    pub seconds: f64,
    /// Batch loss at this iteration (mean squared error per channel).
    pub mse: f64,
    /// Full-video PSNR.
    pub psnr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub records: Vec<EvalRecord>,
    /// Total wall time of the optimization loop (excluding evaluations).
    pub train_seconds: f64,
    pub iterations: usize,
}

impl TrainReport {
    pub fn final_psnr(&self) -> Option<f64> {
        self.records.last().map(|r| r.psnr)
    }

    /// Columns `iteration,seconds,mse,psnr`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,seconds,mse,psnr\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.iteration,
                sig6(r.seconds),
                sig6(r.mse),
                sig6(r.psnr)
            );
        }
        s
    }
}

/// Where a run stopped, enough to resume it bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainState {
    pub iteration: usize,
    pub rng_seed: u64,
    pub rng_stream: u64,
    pub rng_position: u128,
}

/// Progress notifications emitted by [`train_with`].
pub enum TrainEvent<'a> {
    Eval(&'a EvalRecord),
    Checkpoint(TrainState),
}

/// Runs `f` on a pool with `workers` threads (or inline for one worker).
fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers <= 1 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| NvpError::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Forward/backward over a batch, accumulating parameter gradients. Returns
/// the loss `mean over pixels of |rgb - target|^2 / 3`.
pub fn accumulate_batch<R: Representation>(
    model: &mut R,
    coords: &[Coordinate],
    targets: &[[Real; 3]],
    workers: usize,
) -> Result<f64> {
    if coords.len() != targets.len() {
        return Err(NvpError::shape("accumulate_batch", coords.len(), targets.len()));
    }
    let n = coords.len();
    let scale = 2.0 / (3.0 * n as Real);
    let chunk_work = |(cc, tt): (&[Coordinate], &[[Real; 3]])| -> Result<(f64, R::Grads)> {
        let (out, tape) = model.forward(cc)?;
        let mut up = Matrix::zeros(cc.len(), 3);
        let mut sq = 0.0f64;
        for (r, target) in tt.iter().enumerate() {
            for c in 0..3 {
                let d = out.get(r, c) - target[c];
                sq += (d * d) as f64;
                up.set(r, c, scale * d);
            }
        }
        Ok((sq, model.backward(&tape, &up)?))
    };
    let chunks: Vec<(&[Coordinate], &[[Real; 3]])> =
        coords.chunks(CHUNK).zip(targets.chunks(CHUNK)).collect();
    let results: Vec<Result<(f64, R::Grads)>> = with_workers(workers, || {
        if workers <= 1 {
            chunks.iter().map(|c| chunk_work(*c)).collect()
        } else {
            chunks.par_iter().map(|c| chunk_work(*c)).collect()
        }
    })?;
    let mut total = 0.0;
    for r in results {
        let (sq, grads) = r?;
        total += sq;
        model.accumulate(grads)?;
    }
    Ok(total / (3.0 * n as f64))
}

/// Evaluates `model` at the center of every cell of a `frames x height x width`
/// lattice whose time axis spans `t_range`. Values are not clamped.
pub fn render_raw<R: Representation>(
    model: &R,
    frames: usize,
    height: usize,
    width: usize,
    t_range: (Real, Real),
) -> Result<Vec<Real>> {
    let (t0, t1) = t_range;
    if !(0.0..=1.0).contains(&t0) || !(0.0..=1.0).contains(&t1) || t0 > t1 {
        return Err(NvpError::OutOfRange("time range", format!("({t0}, {t1})")));
    }
    let total = frames * height * width;
    let coord = |i: usize| -> Coordinate {
        let x = i % width;
        let y = (i / width) % height;
        let t = i / (width * height);
        let c = pixel_to_coord(t, y, x, frames, height, width).expect("in range");
        Coordinate::new(c.x, c.y, t0 + c.t * (t1 - t0))
    };
    let mut out = Vec::with_capacity(total * 3);
    let mut start = 0;
    while start < total {
        let end = (start + RENDER_CHUNK).min(total);
        let coords: Vec<Coordinate> = (start..end).map(coord).collect();
        let rgb = model.predict(&coords)?;
        out.extend_from_slice(rgb.as_slice());
        start = end;
    }
    Ok(out)
}

/// Renders at the given lattice and clamps into a [`VideoTensor`].
pub fn reconstruct<R: Representation>(
    model: &R,
    frames: usize,
    height: usize,
    width: usize,
    t_range: (Real, Real),
) -> Result<VideoTensor> {
    let raw = render_raw(model, frames, height, width, t_range)?;
    let data = raw
        .into_iter()
        .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
        .collect();
    VideoTensor::from_vec(frames, height, width, data)
}

/// Per-frame PSNR of unclamped model output against `video`.
pub fn frame_psnrs<R: Representation>(model: &R, video: &VideoTensor) -> Result<Vec<f64>> {
    let (t, h, w) = video.dims();
    let raw = render_raw(model, t, h, w, (0.0, 1.0))?;
    let n = video.frame_len();
    Ok((0..t)
        .map(|i| {
            let a = &raw[i * n..(i + 1) * n];
            let b = video.frame(i);
            let mse: f64 = a
                .iter()
                .zip(b)
                .map(|(x, y)| ((x - y) as f64).powi(2))
                .sum::<f64>()
                / n as f64;
            psnr_from_mse(mse)
        })
        .collect())
}

/// Mean over frames of per-frame PSNR.
pub fn evaluate<R: Representation>(model: &R, video: &VideoTensor) -> Result<f64> {
    let p = frame_psnrs(model, video)?;
    Ok(p.iter().sum::<f64>() / p.len() as f64)
}

/// Trains from scratch; see [`train_with`].
pub fn train<R: Representation>(
    model: &mut R,
    video: &VideoTensor,
    cfg: &TrainConfig,
    mask: Option<&PixelMask>,
) -> Result<TrainReport> {
    train_with(model, video, cfg, mask, None, |_, _| Ok(()))
}

/// Full training loop with optional resumption and a progress callback.
///
/// Evaluations happen every `cfg.eval_every` iterations and always after the
/// last one. Checkpoint events fire every `cfg.checkpoint_every` iterations.
/// An evaluation at or above `cfg.target_psnr` ends training early.
pub fn train_with<R: Representation>(
    model: &mut R,
    video: &VideoTensor,
    cfg: &TrainConfig,
    mask: Option<&PixelMask>,
    resume: Option<TrainState>,
    mut on_event: impl FnMut(TrainEvent<'_>, &R) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let sampler = PixelSampler::new(video, mask)?;
    let batch = cfg.batch_for(sampler.available());
    let mut rng = match resume {
        Some(s) => Rng::restore(s.rng_seed, s.rng_stream, s.rng_position),
        None => Rng::new(cfg.seed).fork(SAMPLING_STREAM),
    };
    let start_iter = resume.map_or(0, |s| s.iteration);
    let optimizer = AdamW {
        weight_decay: cfg.weight_decay,
        ..AdamW::default()
    };
    let mut report = TrainReport::default();
    let mut train_time = 0.0;
    let mut last = cfg.total_iters;

    for it in start_iter..cfg.total_iters {
        let started = Instant::now();
        let PixelBatch {
            coords, targets, ..
        } = sampler.sample(video, batch, &mut rng);
        model.zero_grad();
        let loss = accumulate_batch(model, &coords, &targets, cfg.workers)?;
        if !loss.is_finite() {
            return Err(NvpError::NonFiniteLoss { iteration: it });
        }
        let lr = cosine_lr(it, cfg.total_iters, cfg.lr, cfg.lr_min)?;
        for p in model.params_mut() {
            optimizer.step(p, lr)?;
        }
        train_time += started.elapsed().as_secs_f64();

        let done = it + 1;
        let eval_now = done == cfg.total_iters || (cfg.eval_every > 0 && done % cfg.eval_every == 0);
        if eval_now {
            let record = EvalRecord {
                iteration: done,
                seconds: train_time,
                mse: loss,
                psnr: evaluate(model, video)?,
            };
            log::info!(
                "iter {done}: loss {:.3e}, psnr {:.2} dB, {:.1}s",
                record.mse,
                record.psnr,
                record.seconds
            );
            on_event(TrainEvent::Eval(&record), model)?;
            let reached = cfg.target_psnr.is_some_and(|p| record.psnr >= p);
            report.records.push(record);
            if reached {
                log::info!("target PSNR reached at iteration {done}");
                last = done;
                break;
            }
        }
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 {
            let state = TrainState {
                iteration: done,
                rng_seed: rng.seed(),
                rng_stream: rng.stream(),
                rng_position: rng.position(),
            };
            on_event(TrainEvent::Checkpoint(state), model)?;
        }
    }
    for p in model.params_mut() {
        p.zero_grad();
    }
    report.train_seconds = train_time;
    report.iterations = last - start_iter;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use crate::video_io::synthetic;

    fn tiny_config(frames: usize, h: usize, w: usize) -> ModelConfig {
        let mut c = ModelConfig::for_video(frames, h, w, Preset::S);
        c.hidden = 16;
        c
    }

    #[test]
    fn init_is_deterministic_and_small() {
        let a = init_model(tiny_config(4, 8, 8), 3).unwrap();
        let b = init_model(tiny_config(4, 8, 8), 3).unwrap();
        assert_eq!(a, b);
        for kf in &a.keyframes {
            for p in kf.params() {
                assert!(p.value.as_slice().iter().all(|v| v.abs() < 1e-4));
            }
        }
    }

    #[test]
    fn worker_count_does_not_change_gradients() {
        let video = synthetic::structured(4, 16, 16);
        let model = init_model(tiny_config(4, 16, 16), 1).unwrap();
        let batch = crate::video_io::sample_batch(&video, 1000, &mut Rng::new(2), None).unwrap();
        let mut a = model.clone();
        let mut b = model.clone();
        let la = accumulate_batch(&mut a, &batch.coords, &batch.targets, 1).unwrap();
        let lb = accumulate_batch(&mut b, &batch.coords, &batch.targets, 3).unwrap();
        assert_eq!(la.to_bits(), lb.to_bits());
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert_eq!(pa.grad, pb.grad);
        }
    }

    #[test]
    fn single_pixel_overfits() {
        let video = synthetic::constant(1, 1, 1, [0.5, 0.5, 0.5]);
        let mut model = init_model(tiny_config(1, 1, 1), 0).unwrap();
        let cfg = TrainConfig {
            total_iters: 500,
            batch_pixels: Some(1),
            ..TrainConfig::default()
        };
        let report = train(&mut model, &video, &cfg, None).unwrap();
        let last = report.records.last().unwrap();
        assert!(last.mse < 1e-6, "loss {}", last.mse);
    }

    #[test]
    fn evaluate_offsets() {
        // A representation that returns the video plus a constant offset.
        struct Offset(VideoTensor, Real);
        impl Representation for Offset {
            type Tape = ();
            type Grads = ();
            fn forward(&self, coords: &[Coordinate]) -> Result<(Matrix, ())> {
                let (t, h, w) = self.0.dims();
                let mut m = Matrix::zeros(coords.len(), 3);
                for (r, c) in coords.iter().enumerate() {
                    let ix = ((c.x * w as Real) as usize).min(w - 1);
                    let iy = ((c.y * h as Real) as usize).min(h - 1);
                    let it = ((c.t * t as Real) as usize).min(t - 1);
                    let p = self.0.pixel(it, iy, ix);
                    for k in 0..3 {
                        m.set(r, k, p[k] + self.1);
                    }
                }
                Ok((m, ()))
            }
            fn backward(&self, _: &(), _: &Matrix) -> Result<()> {
                Ok(())
            }
            fn accumulate(&mut self, _: ()) -> Result<()> {
                Ok(())
            }
            fn params(&self) -> Vec<&crate::diff_core::ParamBlock> {
                Vec::new()
            }
            fn params_mut(&mut self) -> Vec<&mut crate::diff_core::ParamBlock> {
                Vec::new()
            }
        }
        let video = synthetic::structured(3, 8, 8);
        assert_eq!(evaluate(&Offset(video.clone(), 0.0), &video).unwrap(), 100.0);
        let p = evaluate(&Offset(video.clone(), 0.1), &video).unwrap();
        assert!((p - 20.0).abs() < 1e-9, "{p}");
    }

    #[test]
    fn non_finite_loss_names_iteration() {
        let video = synthetic::constant(1, 2, 2, [0.5; 3]);
        let mut model = init_model(tiny_config(1, 2, 2), 0).unwrap();
        let cfg = TrainConfig {
            total_iters: 3,
            lr: 1e300,
            ..TrainConfig::default()
        };
        match train(&mut model, &video, &cfg, None) {
            Err(NvpError::NonFiniteLoss { iteration }) => assert!(iteration >= 1),
            Err(NvpError::NonFiniteGradient(_)) => {}
            other => panic!("expected a non-finite failure, got {other:?}"),
        }
    }
}
