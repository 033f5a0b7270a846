use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nvp::video_io::{save_frames, save_mask, synthetic, write_nvpv, PixelMask};

const TINY: [&str; 4] = ["--set", "hidden=16", "--log-level", "warn"];

fn nvp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvp"))
        .args(args)
        .output()
        .expect("spawn nvp")
}

fn nvp_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvp"))
        .args(args)
        .env(key, value)
        .output()
        .expect("spawn nvp")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 4x8x8 structured clip as NVPV.
fn clip(dir: &Path) -> PathBuf {
    let p = dir.join("clip.nvpv");
    write_nvpv(&synthetic::structured(4, 8, 8), &p).unwrap();
    p
}

fn encode(dir: &Path, input: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["encode", "--input", s(input), "--out", s(&out), "--iters", "30"];
    args.extend(TINY);
    args.extend(extra);
    let o = nvp(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn field(text: &str, key: &str) -> f64 {
    text.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn encode_constant_video_reaches_50_db() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("const.nvpv");
    write_nvpv(&synthetic::constant(4, 8, 8, [0.3, 0.6, 0.1]), &input).unwrap();
    let out = dir.path().join("m.nvpm");
    let mut args = vec!["encode", "--input", s(&input), "--out", s(&out), "--iters", "2000"];
    args.extend(TINY);
    let o = nvp(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(field(&stdout(&o), "final_psnr") >= 50.0, "{}", stdout(&o));
    let csv = fs::read_to_string(out.with_extension("csv")).unwrap();
    assert!(csv.starts_with("iteration,seconds,mse,psnr\n"));
    // The resolved configuration is echoed.
    assert!(stderr(&o).contains("hidden = 16"));
    assert!(stderr(&o).contains("iters = 2000"));
}

#[test]
fn same_seed_gives_identical_models() {
    let dir = tempfile::tempdir().unwrap();
    let input = clip(dir.path());
    let a = encode(dir.path(), &input, "a.nvpm", &["--seed", "4"]);
    let b = encode(dir.path(), &input, "b.nvpm", &["--seed", "4"]);
    let c = encode(dir.path(), &input, "c.nvpm", &["--seed", "5"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn missing_input_is_a_runtime_error_naming_the_path() {
    let o = nvp(&["encode", "--input", "/no/such/clip", "--out", "/tmp/x.nvpm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/clip"));
}

#[test]
fn usage_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let input = clip(dir.path());
    let out = dir.path().join("m.nvpm");
    let o = nvp(&["encode", "--input", s(&input), "--out", s(&out), "--set", "hiden=3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hiden"));

    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "hidden = 8\nbogus = 1\n").unwrap();
    let o = nvp(&["encode", "--input", s(&input), "--out", s(&out), "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"));

    assert_eq!(nvp(&["encode", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(nvp(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_is_applied_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let input = clip(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small\nhidden = 8\niters = 5\npreset = L\n").unwrap();
    let out = dir.path().join("m.nvpm");
    let log = dir.path().join("run.log");
    let o = nvp(&[
        "encode", "--input", s(&input), "--out", s(&out), "--config", s(&cfg),
        "--iters", "7", "--run-log", s(&log), "--log-level", "warn",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&log).unwrap();
    assert!(text.contains("hidden = 8"));
    assert!(text.contains("iters = 7"));
    assert!(text.contains("keyframe_dim = 4"));
}

#[test]
fn decode_resamples_and_clamps() {
    let dir = tempfile::tempdir().unwrap();
    let input = clip(dir.path());
    let model = encode(dir.path(), &input, "m.nvpm", &[]);
    let frames = dir.path().join("up");
    let o = nvp(&[
        "decode", "--model", s(&model), "--out", s(&frames), "--scale-xy", "2", "--scale-t", "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = nvp::video_io::load_video(&frames).unwrap();
    assert_eq!(v.dims(), (8, 16, 16));
    assert!(v.as_slice().iter().all(|x| (0.0..=1.0).contains(x)));

    let mid = dir.path().join("mid.nvpv");
    let o = nvp(&[
        "decode", "--model", s(&model), "--out", s(&mid), "--nvpv", "--t-range", "0.25", "0.75",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(nvp::video_io::load_video(&mid).unwrap().dims(), (4, 8, 8));

    let o = nvp(&["decode", "--model", s(&model), "--out", s(&mid), "--t-range", "0.8", "0.2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compress_verify_prints_csv_and_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let input = clip(dir.path());
    let model = encode(dir.path(), &input, "m.nvpm", &[]);
    let packed = dir.path().join("m.nvpc");
    let o = nvp(&[
        "compress", "--model", s(&model), "--out", s(&packed), "--verify", s(&input),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("bpp,psnr"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let bytes = fs::metadata(&packed).unwrap().len() as f64;
    assert!((row[0] - bytes * 8.0 / 256.0).abs() < 1e-9);

    let restored = dir.path().join("back.nvpm");
    let o = nvp(&[
        "decompress", "--model", s(&packed), "--out", s(&restored), "--verify", s(&input),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), out);
}

#[test]
fn external_backend_without_tool() {
    let dir = tempfile::tempdir().unwrap();
    let input = clip(dir.path());
    let model = encode(dir.path(), &input, "m.nvpm", &[]);
    let packed = dir.path().join("m.nvpc");
    let args = ["compress", "--model", s(&model), "--out", s(&packed), "--backend", "external"];
    let o = nvp_env(&args, "NVP_FFMPEG", "/nonexistent/ffmpeg");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("fallback"));

    let mut with_fallback = args.to_vec();
    with_fallback.push("--fallback-lossless");
    let o = nvp_env(&with_fallback, "NVP_FFMPEG", "/nonexistent/ffmpeg");
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(packed.exists());
}

#[test]
fn metrics_reports_per_frame_rows() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    save_frames(&synthetic::structured(3, 12, 12), &a).unwrap();
    let o = nvp(&["metrics", "--recon", s(&a), "--truth", s(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("frame,psnr,ssim\n"));
    assert_eq!(out.lines().count(), 4);
}

#[test]
fn inpaint_checks_the_mask() {
    let dir = tempfile::tempdir().unwrap();
    let (video, mask, clean) = synthetic::moving_square(4, 16, 16);
    let input = dir.path().join("in");
    save_frames(&video, &input).unwrap();
    let clean_dir = dir.path().join("clean");
    save_frames(&clean, &clean_dir).unwrap();
    let mask_dir = dir.path().join("mask");
    save_mask(&mask, &mask_dir).unwrap();
    let out = dir.path().join("m.nvpm");
    let frames = dir.path().join("filled");
    let mut args = vec![
        "inpaint", "--input", s(&input), "--mask", s(&mask_dir), "--out", s(&out),
        "--frames-out", s(&frames), "--clean", s(&clean_dir), "--iters", "20",
    ];
    args.extend(TINY);
    let o = nvp(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("masked_psnr="));
    assert_eq!(nvp::video_io::load_video(&frames).unwrap().dims(), (4, 16, 16));

    let small = dir.path().join("small_mask");
    save_mask(&PixelMask::empty(4, 8, 8), &small).unwrap();
    args[4] = s(&small);
    assert_eq!(nvp(&args).status.code(), Some(1));

    let full = dir.path().join("full_mask");
    save_mask(&PixelMask::new(4, 16, 16, vec![true; 4 * 16 * 16]).unwrap(), &full).unwrap();
    args[4] = s(&full);
    assert_eq!(nvp(&args).status.code(), Some(2));
}

#[test]
fn ablate_writes_one_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let input = clip(dir.path());
    let csv = dir.path().join("ablation.csv");
    let mut args = vec![
        "ablate", "--input", s(&input), "--variants", "keyframes,upsample", "--iters", "10",
        "--out", s(&csv),
    ];
    args.extend(TINY);
    let o = nvp(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    let variants: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(variants, ["full", "keyframes", "upsample"]);

    args[4] = "keyframes,nope";
    assert_eq!(nvp(&args).status.code(), Some(1));
}

#[test]
fn export_keyframes_writes_every_level_and_channel() {
    let dir = tempfile::tempdir().unwrap();
    let input = clip(dir.path());
    let model = encode(dir.path(), &input, "m.nvpm", &["--set", "levels=2"]);
    let out = dir.path().join("kf");
    let o = nvp(&["export-keyframes", "--model", s(&model), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    // 3 axis pairs x 2 levels x 2 channels.
    assert_eq!(fs::read_dir(&out).unwrap().count(), 12);
    assert!(out.join("xy_l01_c1.png").exists());
}
