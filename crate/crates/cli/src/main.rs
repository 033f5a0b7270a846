//! `nvp`: encode videos into neural representations and back.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

mod resolve;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nvp::ablation::{ablation_csv, run_ablation, Variant};
use nvp::codec::{
    bpp, compress, decompress, export_keyframes, external, load_model, save_checkpoint,
    save_model, CodecBackend, CodecSettings, CompressedModel,
};
use nvp::config::Preset;
use nvp::metrics::{frame_curve_csv, mean_std, per_frame_curve, psnr, sig6};
use nvp::trainer::{evaluate, init_model, reconstruct, train_with, TrainEvent};
use nvp::video_io::{load_mask, load_video, save_frames, PixelMask, VideoTensor};
use nvp::{NvpModel, Real};

use resolve::{parse_assignment, resolve, Resolved};

/// Bad flags, config keys or values: exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "nvp", version, about = "Neural video representation encoder")]
struct Cli {
    /// Log level (error, warn, info, debug).
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a video and write it as NVPM.
    Encode(EncodeArgs),
    /// Render frames from a model, optionally resampled in space and time.
    Decode(DecodeArgs),
    /// Quantize and code the latent grids of an NVPM model into NVPC.
    Compress(CompressArgs),
    /// Turn an NVPC file back into an NVPM model.
    Decompress(DecompressArgs),
    /// Per-frame PSNR/SSIM between two videos.
    Metrics(MetricsArgs),
    /// Train with masked pixels excluded and render the full frames.
    Inpaint(InpaintArgs),
    /// Train component ablations at matched parameter counts.
    Ablate(AblateArgs),
    /// Write every keyframe level/channel as a grayscale PNG.
    ExportKeyframes(ExportArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Frame directory (f00000.png, ...) or NVPV file.
    #[arg(long)]
    input: PathBuf,
    /// `key = value` config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    /// Pixels per iteration, or `auto`.
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    lr: Option<String>,
    /// Telemetry row every N iterations.
    #[arg(long)]
    eval_every: Option<usize>,
    /// Any config key, e.g. `--set hidden=128` (repeatable).
    #[arg(long = "set", value_parser = parse_assignment)]
    sets: Vec<(String, String)>,
    /// Also write the resolved configuration to this file.
    #[arg(long)]
    run_log: Option<PathBuf>,
}

impl TrainArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut o = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        push("iters", self.iters.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("batch", self.batch.clone());
        push("workers", self.workers.map(|v| v.to_string()));
        push("lr", self.lr.clone());
        push("eval_every", self.eval_every.map(|v| v.to_string()));
        o.extend(self.sets.iter().cloned());
        o
    }

    fn load(&self) -> anyhow::Result<(VideoTensor, Resolved)> {
        let video = load_video(&self.input)?;
        let resolved = resolve(
            video.dims(),
            self.preset,
            self.config.as_deref(),
            &self.overrides(),
        )?;
        log_config(&resolved.to_kv(), self.run_log.as_deref())?;
        Ok((video, resolved))
    }
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    out: PathBuf,
    /// Telemetry CSV (default: `<out>` with a .csv extension).
    #[arg(long)]
    telemetry: Option<PathBuf>,
    /// Checkpoint file, rewritten every `checkpoint_every` iterations.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output frame directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    scale_xy: f64,
    #[arg(long, default_value_t = 1.0)]
    scale_t: f64,
    /// Normalized time interval covered by the output frames.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    t_range: Option<Vec<f64>>,
    /// Write an NVPV file instead of PNG frames.
    #[arg(long)]
    nvpv: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Lossless,
    External,
}

#[derive(Args)]
struct CompressArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "lossless")]
    backend: BackendArg,
    /// Codec defaults (default: inferred from the model's latent width).
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    /// JPEG quality scale, one value or `xy,xt,yt`.
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    crf: Option<u32>,
    #[arg(long)]
    fr: Option<u32>,
    /// Use the lossless backend when the external tool is unavailable.
    #[arg(long)]
    fallback_lossless: bool,
    /// Ground-truth video; prints `bpp,psnr` as CSV on stdout.
    #[arg(long)]
    verify: Option<PathBuf>,
}

#[derive(Args)]
struct DecompressArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth video; prints `bpp,psnr` as CSV on stdout.
    #[arg(long)]
    verify: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    recon: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Write the per-frame CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InpaintArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Directory of 0/255 masks; nonzero pixels are excluded from training.
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the rendered frames.
    #[arg(long)]
    frames_out: PathBuf,
    /// Clean video; reports PSNR inside the masked region.
    #[arg(long)]
    clean: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Comma-separated variants; `full` is always run first.
    #[arg(long, default_value = "keyframes,sparse,modulation,concat,upsample")]
    variants: String,
    /// Comma-separated seeds (default: the resolved seed).
    #[arg(long)]
    seeds: Option<String>,
    /// CSV destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: nvp::NvpError| e.to_string())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, UsageError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| UsageError(format!("bad {what} `{p}` in `{s}`")))
        })
        .collect()
}

fn log_config(text: &str, run_log: Option<&Path>) -> anyhow::Result<()> {
    eprintln!("# resolved configuration\n{text}");
    if let Some(p) = run_log {
        fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn load_nvpm(path: &Path) -> anyhow::Result<NvpModel> {
    Ok(load_model(path)?.0)
}

fn cmd_encode(a: EncodeArgs) -> anyhow::Result<()> {
    let (video, mut r) = a.train.load()?;
    if let Some(n) = a.checkpoint_every {
        r.train.checkpoint_every = n;
    }
    if r.train.checkpoint_every > 0 && a.checkpoint.is_none() {
        return Err(UsageError("checkpoint_every needs --checkpoint <path>".into()).into());
    }
    let (mut model, resume) = match &a.resume {
        Some(p) => {
            let (m, state) = load_model(p)?;
            let state = state.with_context(|| format!("{} is not a checkpoint", p.display()))?;
            if m.config != r.model {
                bail!("{}: model config differs from the resolved config", p.display());
            }
            (m, Some(state))
        }
        None => (init_model(r.model.clone(), r.train.seed)?, None),
    };
    let report = run_training(&mut model, &video, &r, None, resume, a.checkpoint.as_deref())?;
    save_model(&model, &a.out)?;
    let telemetry = a.telemetry.unwrap_or_else(|| a.out.with_extension("csv"));
    fs::write(&telemetry, report.to_csv())
        .with_context(|| format!("writing {}", telemetry.display()))?;
    println!(
        "final_psnr={} train_seconds={} params={}",
        sig6(report.final_psnr().unwrap_or(f64::NAN)),
        sig6(report.train_seconds),
        model.config.param_count()
    );
    Ok(())
}

fn run_training(
    model: &mut NvpModel,
    video: &VideoTensor,
    r: &Resolved,
    mask: Option<&PixelMask>,
    resume: Option<nvp::trainer::TrainState>,
    checkpoint: Option<&Path>,
) -> anyhow::Result<nvp::trainer::TrainReport> {
    let report = train_with(model, video, &r.train, mask, resume, |ev, m| {
        if let (TrainEvent::Checkpoint(state), Some(path)) = (ev, checkpoint) {
            save_checkpoint(m, &state, path)?;
            log::info!("checkpoint at iteration {} -> {}", state.iteration, path.display());
        }
        Ok(())
    })?;
    Ok(report)
}

fn cmd_decode(a: DecodeArgs) -> anyhow::Result<()> {
    let model = load_nvpm(&a.model)?;
    if !(a.scale_xy > 0.0 && a.scale_t > 0.0) {
        return Err(UsageError("scale factors must be positive".into()).into());
    }
    let t_range = match a.t_range.as_deref() {
        Some([t0, t1]) => (*t0 as Real, *t1 as Real),
        _ => (0.0, 1.0),
    };
    let c = &model.config;
    let size = |n: usize, k: f64| ((n as f64 * k).round() as usize).max(1);
    let (t, h, w) = (
        size(c.frames, a.scale_t),
        size(c.height, a.scale_xy),
        size(c.width, a.scale_xy),
    );
    let cfg = format!(
        "model = {}\nframes = {t}\nheight = {h}\nwidth = {w}\nt_range = {},{}\n",
        a.model.display(),
        t_range.0,
        t_range.1
    );
    log_config(&cfg, None)?;
    let video = reconstruct(&model, t, h, w, t_range)?;
    if a.nvpv {
        nvp::video_io::write_nvpv(&video, &a.out)?;
    } else {
        save_frames(&video, &a.out)?;
    }
    println!("frames={t} height={h} width={w}");
    Ok(())
}

fn codec_settings(a: &CompressArgs, model: &NvpModel) -> anyhow::Result<CodecSettings> {
    if let BackendArg::Lossless = a.backend {
        return Ok(CodecSettings::lossless());
    }
    let preset = a.preset.unwrap_or(if model.config.keyframe_dim >= 4 {
        Preset::L
    } else {
        Preset::S
    });
    let mut s = CodecSettings::external(preset);
    if let Some(text) = &a.scale {
        let scales: Vec<u32> = parse_list(text, "scale")?;
        let scales = match scales.as_slice() {
            [v] => [*v; 3],
            [a, b, c] => [*a, *b, *c],
            _ => return Err(UsageError("--scale takes 1 or 3 values".into()).into()),
        };
        s.keyframes = scales.map(|scale| CodecBackend::ImageExternal { scale });
    }
    if let CodecBackend::VideoExternal { fr, crf } = &mut s.sparse {
        if let Some(v) = a.fr {
            *fr = v;
        }
        if let Some(v) = a.crf {
            *crf = v;
        }
    }
    if !external::ffmpeg_available() {
        if a.fallback_lossless {
            log::warn!("external tool not found; falling back to the lossless backend");
            return Ok(CodecSettings::lossless());
        }
        bail!(
            "external backend requested but `{}` is not runnable (set NVP_FFMPEG or pass --fallback-lossless)",
            external::ffmpeg_program().to_string_lossy()
        );
    }
    Ok(s)
}

fn print_verify(c: &CompressedModel, model: &NvpModel, truth: &Path) -> anyhow::Result<()> {
    let video = load_video(truth)?;
    let psnr = evaluate(model, &video)?;
    println!("bpp,psnr\n{},{}", bpp(c, video.dims()), sig6(psnr));
    Ok(())
}

fn cmd_compress(a: CompressArgs) -> anyhow::Result<()> {
    let model = load_nvpm(&a.model)?;
    let settings = codec_settings(&a, &model)?;
    log_config(&format!("model = {}\n{settings:?}\n", a.model.display()), None)?;
    let c = compress(&model, &settings)?;
    c.write(&a.out)?;
    let dims = (model.config.frames, model.config.height, model.config.width);
    eprintln!("{} bytes, {} bpp", c.byte_len(), sig6(bpp(&c, dims)));
    if let Some(truth) = &a.verify {
        print_verify(&c, &decompress(&c)?, truth)?;
    }
    Ok(())
}

fn cmd_decompress(a: DecompressArgs) -> anyhow::Result<()> {
    log_config(&format!("model = {}\n", a.model.display()), None)?;
    let c = CompressedModel::read(&a.model)?;
    let model = decompress(&c)?;
    save_model(&model, &a.out)?;
    if let Some(truth) = &a.verify {
        print_verify(&c, &model, truth)?;
    }
    Ok(())
}

fn cmd_metrics(a: MetricsArgs) -> anyhow::Result<()> {
    log_config(
        &format!("recon = {}\ntruth = {}\n", a.recon.display(), a.truth.display()),
        None,
    )?;
    let recon = load_video(&a.recon)?;
    let truth = load_video(&a.truth)?;
    let curve = per_frame_curve(&recon, &truth)?;
    let (mean, std) = mean_std(&curve.iter().map(|m| m.psnr).collect::<Vec<_>>());
    let csv = frame_curve_csv(&curve);
    match &a.out {
        Some(p) => fs::write(p, &csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    eprintln!("mean psnr {} dB (std {})", sig6(mean), sig6(std));
    Ok(())
}

fn cmd_inpaint(a: InpaintArgs) -> anyhow::Result<()> {
    let (video, r) = a.train.load()?;
    let mask = load_mask(&a.mask)?;
    if mask.dims() != video.dims() {
        return Err(UsageError(format!(
            "mask is {:?} but the video is {:?}",
            mask.dims(),
            video.dims()
        ))
        .into());
    }
    let mut model = init_model(r.model.clone(), r.train.seed)?;
    let report = run_training(&mut model, &video, &r, Some(&mask), None, None)?;
    save_model(&model, &a.out)?;
    let (t, h, w) = video.dims();
    let recon = reconstruct(&model, t, h, w, (0.0, 1.0))?;
    save_frames(&recon, &a.frames_out)?;
    println!(
        "final_psnr={} train_seconds={}",
        sig6(report.final_psnr().unwrap_or(f64::NAN)),
        sig6(report.train_seconds)
    );
    if let Some(clean) = &a.clean {
        let clean = load_video(clean)?;
        println!("masked_psnr={}", sig6(masked_psnr(&recon, &clean, &mask)?));
    }
    Ok(())
}

/// PSNR restricted to masked pixels.
fn masked_psnr(recon: &VideoTensor, clean: &VideoTensor, mask: &PixelMask) -> anyhow::Result<f64> {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for i in 0..clean.pixel_count() {
        if mask.is_masked(i) {
            a.extend(recon.pixel_flat(i));
            b.extend(clean.pixel_flat(i));
        }
    }
    Ok(psnr(&a, &b)?)
}

fn cmd_ablate(a: AblateArgs) -> anyhow::Result<()> {
    let (video, r) = a.train.load()?;
    let mut variants = vec![Variant::Full];
    for v in parse_list::<Variant>(&a.variants, "variant")? {
        if !variants.contains(&v) {
            variants.push(v);
        }
    }
    let seeds = match &a.seeds {
        Some(s) => parse_list(s, "seed")?,
        None => vec![r.train.seed],
    };
    let rows = run_ablation(&video, &r.model, &r.train, &variants, &seeds)?;
    let csv = ablation_csv(&rows);
    match &a.out {
        Some(p) => fs::write(p, &csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_export(a: ExportArgs) -> anyhow::Result<()> {
    log_config(&format!("model = {}\n", a.model.display()), None)?;
    let model = load_nvpm(&a.model)?;
    let written = export_keyframes(&model, &a.out)?;
    println!("wrote {} images to {}", written.len(), a.out.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let started = Instant::now();
    match cli.command {
        Command::Encode(a) => cmd_encode(a)?,
        Command::Decode(a) => cmd_decode(a)?,
        Command::Compress(a) => cmd_compress(a)?,
        Command::Decompress(a) => cmd_decompress(a)?,
        Command::Metrics(a) => cmd_metrics(a)?,
        Command::Inpaint(a) => cmd_inpaint(a)?,
        Command::Ablate(a) => cmd_ablate(a)?,
        Command::ExportKeyframes(a) => cmd_export(a)?,
    }
    log::info!("done in {:.2}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
