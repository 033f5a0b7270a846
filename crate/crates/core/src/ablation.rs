//! Component ablations at matched parameter counts.
//!
//! Each variant switches one component off (or changes one behavior) and
//! then re-tunes a single width so the total parameter count stays as close
//! as possible to the full model's:
//!
//! | variant        | change                       | re-tuned      |
//! |----------------|------------------------------|---------------|
//! | `keyframes`    | no latent keyframes          | `sparse_dim`  |
//! | `sparse`       | no sparse grid               | `keyframe_dim`|
//! | `modulation`   | plain MLP head on `[z, t]`   | `hidden`      |
//! | `concat`       | 1x1x1 sparse window          | `sparse_dim`  |
//! | `upsample`     | trilinear sparse taps        | nothing       |
//!
//! Widths are integers, so a match is only as close as one step of the
//! re-tuned knob allows; the CSV reports the exact counts.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::config::{ModelConfig, TrainConfig};
use crate::error::{NvpError, Result};
use crate::metrics::sig6;
use crate::trainer::{init_model, train_with, TrainEvent};
use crate::video_io::VideoTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoKeyframes,
    NoSparse,
    NoModulation,
    NoConcat,
    Upsample,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoKeyframes,
        Variant::NoSparse,
        Variant::NoModulation,
        Variant::NoConcat,
        Variant::Upsample,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoKeyframes => "keyframes",
            Variant::NoSparse => "sparse",
            Variant::NoModulation => "modulation",
            Variant::NoConcat => "concat",
            Variant::Upsample => "upsample",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = NvpError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                NvpError::Config(format!(
                    "unknown variant `{s}` (expected full, keyframes, sparse, modulation, concat or upsample)"
                ))
            })
    }
}

/// Sets `knob` to the value in `1..=max` whose parameter count is closest to
/// `target`, preferring the smaller value on ties.
fn match_params(
    cfg: &mut ModelConfig,
    target: usize,
    max: usize,
    knob: impl Fn(&mut ModelConfig, usize),
) {
    let mut best = (usize::MAX, 1);
    for v in 1..=max {
        knob(cfg, v);
        if cfg.validate().is_err() {
            continue;
        }
        let gap = cfg.param_count().abs_diff(target);
        if gap < best.0 {
            best = (gap, v);
        }
    }
    knob(cfg, best.1);
}

/// The architecture of `variant` with its parameter count matched to `base`.
pub fn variant_config(base: &ModelConfig, variant: Variant) -> ModelConfig {
    let target = base.param_count();
    let mut cfg = base.clone();
    match variant {
        Variant::Full => {}
        Variant::NoKeyframes => {
            cfg.keyframes = false;
            match_params(&mut cfg, target, 256, |c, v| c.sparse_dim = v);
        }
        Variant::NoSparse => {
            cfg.sparse = false;
            match_params(&mut cfg, target, 256, |c, v| c.keyframe_dim = v);
        }
        Variant::NoModulation => {
            cfg.modulation = false;
            match_params(&mut cfg, target, 1024, |c, v| c.hidden = v);
        }
        Variant::NoConcat => {
            cfg.window = [1, 1, 1];
            match_params(&mut cfg, target, 256, |c, v| c.sparse_dim = v);
        }
        Variant::Upsample => cfg.upsample = true,
    }
    cfg
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub params: usize,
    /// PSNR after 10% of the iterations.
    pub early_psnr: f64,
    pub final_psnr: f64,
    pub seconds_per_iter: f64,
}

/// Iteration of the early checkpoint.
pub fn early_iteration(total: usize) -> usize {
    (total / 10).max(1)
}

/// Trains one variant and records its early and final PSNR.
pub fn run_variant(
    video: &VideoTensor,
    base: &ModelConfig,
    train: &TrainConfig,
    variant: Variant,
) -> Result<AblationRow> {
    let cfg = variant_config(base, variant);
    let mut model = init_model(cfg, train.seed)?;
    let early_at = early_iteration(train.total_iters);
    let tc = TrainConfig {
        eval_every: early_at,
        checkpoint_every: 0,
        ..train.clone()
    };
    let mut early = None;
    let report = train_with(&mut model, video, &tc, None, None, |ev, _| {
        if let TrainEvent::Eval(r) = ev {
            if r.iteration == early_at {
                early = Some(r.psnr);
            }
        }
        Ok(())
    })?;
    let final_psnr = report.final_psnr().expect("at least one evaluation");
    Ok(AblationRow {
        variant,
        seed: train.seed,
        params: model.config.param_count(),
        early_psnr: early.unwrap_or(final_psnr),
        final_psnr,
        seconds_per_iter: report.train_seconds / report.iterations.max(1) as f64,
    })
}

/// Runs every variant for every seed (seed-major order).
pub fn run_ablation(
    video: &VideoTensor,
    base: &ModelConfig,
    train: &TrainConfig,
    variants: &[Variant],
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(variants.len() * seeds.len());
    for &seed in seeds {
        let tc = TrainConfig {
            seed,
            ..train.clone()
        };
        for &v in variants {
            let row = run_variant(video, base, &tc, v)?;
            log::info!(
                "ablation {v} seed {seed}: {} params, early {:.2} dB, final {:.2} dB",
                row.params,
                row.early_psnr,
                row.final_psnr
            );
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Columns `variant,seed,params,early_psnr,final_psnr,seconds_per_iter`.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("variant,seed,params,early_psnr,final_psnr,seconds_per_iter\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.variant,
            r.seed,
            r.params,
            sig6(r.early_psnr),
            sig6(r.final_psnr),
            sig6(r.seconds_per_iter)
        );
    }
    s
}
