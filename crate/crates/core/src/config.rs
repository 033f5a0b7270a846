//! Architecture and training hyperparameters, and the `key = value` text
//! format they are read from and written to.
//!
//! The same text form is embedded in NVPM/NVPC headers, so a model file is
//! self-describing.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::diff_core::Real;
use crate::error::{NvpError, Result};
use crate::latent_grids::level_resolutions;

/// Named size presets: `S` binds latent dims 2, `L` binds 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    S,
    L,
}

impl FromStr for Preset {
    type Err = NvpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "s" => Ok(Preset::S),
            "L" | "l" => Ok(Preset::L),
            other => Err(NvpError::Config(format!("unknown preset `{other}` (expected S or L)"))),
        }
    }
}

impl Preset {
    pub fn latent_dim(self) -> usize {
        match self {
            Preset::S => 2,
            Preset::L => 4,
        }
    }
}

/// Architecture of an [`crate::neural_field::NvpModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub frames: usize,
    pub height: usize,
    pub width: usize,

    pub keyframes: bool,
    pub levels: usize,
    pub level_scale: f64,
    pub base_resolution: usize,
    pub keyframe_dim: usize,

    pub sparse: bool,
    /// Cells along `(x, y, t)`.
    pub sparse_shape: [usize; 3],
    pub sparse_dim: usize,
    /// Window along `(x, y, t)`.
    pub window: [usize; 3],
    pub upsample: bool,

    pub modulation: bool,
    pub depth: usize,
    pub hidden: usize,
    pub sigmas: Vec<Real>,
    pub leaky_slope: Real,
}

/// Number of keyframe levels whose finest side still fits the largest video side.
fn desk_levels(scale: f64, base: usize, longest: usize) -> usize {
    let fitting = level_resolutions(32, scale, (base, base))
        .iter()
        .take_while(|(h, _)| *h <= longest)
        .count();
    fitting.max(1)
}

impl ModelConfig {
    /// Desk-scale defaults for a `frames x height x width` video.
    pub fn for_video(frames: usize, height: usize, width: usize, preset: Preset) -> Self {
        let level_scale = 1.35;
        let base_resolution = 16;
        let quarter = |n: usize| (n / 4).max(4);
        ModelConfig {
            frames,
            height,
            width,
            keyframes: true,
            levels: desk_levels(level_scale, base_resolution, height.max(width)),
            level_scale,
            base_resolution,
            keyframe_dim: preset.latent_dim(),
            sparse: true,
            sparse_shape: [quarter(width), quarter(height), quarter(frames)],
            sparse_dim: preset.latent_dim(),
            window: [3, 3, 1],
            upsample: false,
            modulation: true,
            depth: 3,
            hidden: 128,
            sigmas: vec![30.0, 1.0],
            leaky_slope: 0.01,
        }
    }

    /// Full-scale architecture used for 1080p benchmark videos.
    pub fn full_scale(frames: usize, height: usize, width: usize, preset: Preset) -> Self {
        ModelConfig {
            levels: 16,
            sparse_shape: [300, 300, if frames > 300 { 600 } else { 300 }],
            ..ModelConfig::for_video(frames, height, width, preset)
        }
    }

    pub fn keyframe_output_dim(&self) -> usize {
        if self.keyframes {
            self.levels * self.keyframe_dim
        } else {
            0
        }
    }

    pub fn sparse_output_dim(&self) -> usize {
        if self.sparse {
            self.window.iter().product::<usize>() * self.sparse_dim
        } else {
            0
        }
    }

    /// Width of the latent vector fed to the field: `3 L C + h w s D`.
    pub fn z_dim(&self) -> usize {
        3 * self.keyframe_output_dim() + self.sparse_output_dim()
    }

    pub fn keyframe_params(&self) -> usize {
        if !self.keyframes {
            return 0;
        }
        let per: usize = level_resolutions(
            self.levels,
            self.level_scale,
            (self.base_resolution, self.base_resolution),
        )
        .iter()
        .map(|(h, w)| h * w)
        .sum();
        3 * per * self.keyframe_dim
    }

    pub fn sparse_params(&self) -> usize {
        if self.sparse {
            self.sparse_shape.iter().product::<usize>() * self.sparse_dim
        } else {
            0
        }
    }

    pub fn field_params(&self) -> usize {
        let (z, h, k) = (self.z_dim(), self.hidden, self.depth);
        if self.modulation {
            let synth = (h + h) + (k - 2) * (h * h + h) + (3 * h + 3);
            let modulator = (z * h + h) + (k - 2) * (h * h + h);
            synth + modulator
        } else {
            (z + 1) * h + h + (k - 2) * (h * h + h) + 3 * h + 3
        }
    }

    pub fn param_count(&self) -> usize {
        self.keyframe_params() + self.sparse_params() + self.field_params()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NvpError::Config(m));
        if self.frames == 0 || self.height == 0 || self.width == 0 {
            return bad("video dimensions must be positive".into());
        }
        if !self.keyframes && !self.sparse {
            return bad("at least one of keyframes/sparse must be enabled".into());
        }
        if self.keyframes
            && (self.levels == 0
                || self.keyframe_dim == 0
                || self.base_resolution == 0
                || !(self.level_scale >= 1.0))
        {
            return bad("keyframes need levels, keyframe_dim, base_resolution > 0 and level_scale >= 1".into());
        }
        if self.sparse {
            if self.sparse_shape.contains(&0) || self.window.contains(&0) || self.sparse_dim == 0 {
                return bad("sparse grid needs positive sparse_shape, window and sparse_dim".into());
            }
            if self.window.iter().zip(&self.sparse_shape).any(|(w, s)| w > s) {
                return bad(format!(
                    "window {:?} exceeds sparse_shape {:?}",
                    self.window, self.sparse_shape
                ));
            }
        }
        if self.depth < 2 || self.hidden == 0 {
            return bad("depth must be >= 2 and hidden > 0".into());
        }
        if self.sigmas.len() != self.depth - 1 {
            return bad(format!(
                "sigmas has {} entries, depth {} needs {}",
                self.sigmas.len(),
                self.depth,
                self.depth - 1
            ));
        }
        if self.sigmas.iter().any(|s| !(*s > 0.0)) {
            return bad("sigmas must be positive".into());
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad("leaky_slope must be in (0, 1)".into());
        }
        Ok(())
    }

    /// Applies one `key = value` pair. Returns `Ok(false)` for keys this
    /// struct does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "frames" => self.frames = parse(key, value)?,
            "height" => self.height = parse(key, value)?,
            "width" => self.width = parse(key, value)?,
            "keyframes" => self.keyframes = parse_bool(key, value)?,
            "levels" => self.levels = parse(key, value)?,
            "level_scale" => self.level_scale = parse(key, value)?,
            "base_resolution" => self.base_resolution = parse(key, value)?,
            "keyframe_dim" => self.keyframe_dim = parse(key, value)?,
            "sparse" => self.sparse = parse_bool(key, value)?,
            "sparse_shape" => self.sparse_shape = parse_triple(key, value)?,
            "sparse_dim" => self.sparse_dim = parse(key, value)?,
            "window" => self.window = parse_triple(key, value)?,
            "upsample" => self.upsample = parse_bool(key, value)?,
            "modulation" => self.modulation = parse_bool(key, value)?,
            "depth" => self.depth = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "sigmas" => self.sigmas = parse_list(key, value)?,
            "leaky_slope" => self.leaky_slope = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let join = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(s, "frames = {}", self.frames);
        let _ = writeln!(s, "height = {}", self.height);
        let _ = writeln!(s, "width = {}", self.width);
        let _ = writeln!(s, "keyframes = {}", self.keyframes);
        let _ = writeln!(s, "levels = {}", self.levels);
        let _ = writeln!(s, "level_scale = {}", self.level_scale);
        let _ = writeln!(s, "base_resolution = {}", self.base_resolution);
        let _ = writeln!(s, "keyframe_dim = {}", self.keyframe_dim);
        let _ = writeln!(s, "sparse = {}", self.sparse);
        let _ = writeln!(s, "sparse_shape = {}", join(&self.sparse_shape));
        let _ = writeln!(s, "sparse_dim = {}", self.sparse_dim);
        let _ = writeln!(s, "window = {}", join(&self.window));
        let _ = writeln!(s, "upsample = {}", self.upsample);
        let _ = writeln!(s, "modulation = {}", self.modulation);
        let _ = writeln!(s, "depth = {}", self.depth);
        let _ = writeln!(s, "hidden = {}", self.hidden);
        let sig: Vec<String> = self.sigmas.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "sigmas = {}", sig.join(","));
        let _ = writeln!(s, "leaky_slope = {}", self.leaky_slope);
        s
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::for_video(1, 1, 1, Preset::S);
        for (line, key, value) in parse_kv(text)? {
            if !cfg.set(&key, &value)? {
                return Err(NvpError::Config(format!("line {line}: unknown key `{key}`")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Optimization schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub total_iters: usize,
    /// Pixels per iteration; `None` means `min(DESK_BATCH, T * H * W)`.
    pub batch_pixels: Option<usize>,
    pub lr: Real,
    pub lr_min: Real,
    pub weight_decay: Real,
    pub seed: u64,
    /// Write a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: usize,
    /// Record a telemetry row every this many iterations (0 means only at the end).
    pub eval_every: usize,
    /// Worker threads for batch evaluation (results do not depend on it).
    pub workers: usize,
    /// Stop at the first evaluation reaching this PSNR.
    pub target_psnr: Option<f64>,
}

/// Batch size used at full scale (about 0.1% of a 600-frame 1080p video).
pub const FULL_BATCH: usize = 1_245_184;

/// Default batch size; `FULL_BATCH` is out of reach on a CPU.
pub const DESK_BATCH: usize = 2048;

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_iters: 100_000,
            batch_pixels: None,
            lr: 0.01,
            lr_min: 0.00001,
            weight_decay: 0.001,
            seed: 0,
            checkpoint_every: 0,
            eval_every: 0,
            workers: 1,
            target_psnr: None,
        }
    }
}

impl TrainConfig {
    pub fn batch_for(&self, pixels: usize) -> usize {
        self.batch_pixels.unwrap_or(DESK_BATCH.min(pixels)).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_iters == 0 {
            return Err(NvpError::Config("iters must be >= 1".into()));
        }
        if !(self.lr_min > 0.0 && self.lr >= self.lr_min) {
            return Err(NvpError::Config(format!(
                "need lr >= lr_min > 0 (lr = {}, lr_min = {})",
                self.lr, self.lr_min
            )));
        }
        if self.batch_pixels == Some(0) {
            return Err(NvpError::Config("batch must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(NvpError::Config("weight_decay must be >= 0".into()));
        }
        if self.target_psnr.is_some_and(|p| !p.is_finite()) {
            return Err(NvpError::Config("target_psnr must be finite".into()));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "iters" => self.total_iters = parse(key, value)?,
            "batch" => {
                self.batch_pixels = if value == "auto" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "lr" => self.lr = parse(key, value)?,
            "lr_min" => self.lr_min = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "workers" => self.workers = parse::<usize>(key, value)?.max(1),
            "target_psnr" => {
                self.target_psnr = if value == "none" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "iters = {}", self.total_iters);
        match self.batch_pixels {
            Some(b) => {
                let _ = writeln!(s, "batch = {b}");
            }
            None => {
                let _ = writeln!(s, "batch = auto");
            }
        }
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "lr_min = {}", self.lr_min);
        let _ = writeln!(s, "weight_decay = {}", self.weight_decay);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "checkpoint_every = {}", self.checkpoint_every);
        let _ = writeln!(s, "eval_every = {}", self.eval_every);
        let _ = writeln!(s, "workers = {}", self.workers);
        match self.target_psnr {
            Some(p) => {
                let _ = writeln!(s, "target_psnr = {p}");
            }
            None => {
                let _ = writeln!(s, "target_psnr = none");
            }
        }
        s
    }
}

/// Splits `key = value` text into `(line number, key, value)` triples.
/// Blank lines and `#` comments are ignored.
pub fn parse_kv(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            NvpError::Config(format!("line {}: expected `key = value`, got `{line}`", i + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(NvpError::Config(format!("line {}: empty key", i + 1)));
        }
        out.push((i + 1, k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| NvpError::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        _ => Err(NvpError::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|p| parse(key, p.trim()))
        .collect()
}

fn parse_triple(key: &str, value: &str) -> Result<[usize; 3]> {
    let v: Vec<usize> = parse_list(key, value)?;
    v.try_into()
        .map_err(|_| NvpError::Config(format!("`{key}` needs three comma-separated integers")))
}
