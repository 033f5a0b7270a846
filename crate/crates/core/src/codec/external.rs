//! Subprocess wrapper around the `ffmpeg` command-line tool.
//!
//! The binary is taken from `NVP_FFMPEG` when set, otherwise `ffmpeg` is
//! resolved on `PATH`. Inputs and outputs go through a scratch directory.

use std::ffi::OsString;
use std::path::Path;
use std::process::Command;

use image::GrayImage;

use crate::error::{NvpError, Result};

const TOOL: &str = "ffmpeg";

pub fn ffmpeg_program() -> OsString {
    std::env::var_os("NVP_FFMPEG").unwrap_or_else(|| OsString::from(TOOL))
}

/// Whether the external encoder can be launched.
pub fn ffmpeg_available() -> bool {
    Command::new(ffmpeg_program())
        .arg("-version")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn tool_error(message: impl Into<String>) -> NvpError {
    NvpError::ExternalTool {
        tool: TOOL.into(),
        message: message.into(),
    }
}

fn run(args: &[&std::ffi::OsStr]) -> Result<()> {
    let program = ffmpeg_program();
    log::debug!("running {:?} {:?}", program, args);
    let out = Command::new(&program)
        .args(args)
        .output()
        .map_err(|e| tool_error(format!("cannot launch {}: {e}", program.to_string_lossy())))?;
    if !out.status.success() {
        return Err(tool_error(format!(
            "exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(())
}

fn scratch() -> Result<tempfile::TempDir> {
    tempfile::tempdir().map_err(|e| NvpError::io("creating scratch directory", e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| NvpError::io(format!("reading {}", path.display()), e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| NvpError::io(format!("writing {}", path.display()), e))
}

fn save_gray(plane: &[u8], height: usize, width: usize, path: &Path) -> Result<()> {
    let img = GrayImage::from_raw(width as u32, height as u32, plane.to_vec())
        .ok_or_else(|| NvpError::shape("gray plane", height * width, plane.len()))?;
    img.save(path).map_err(|e| NvpError::Image {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Encodes one 8-bit plane as JPEG:
/// `ffmpeg -hide_banner -i input.png -qscale:v SCALE output.jpg`.
pub fn encode_jpeg(plane: &[u8], height: usize, width: usize, scale: u32) -> Result<Vec<u8>> {
    let dir = scratch()?;
    let input = dir.path().join("input.png");
    let output = dir.path().join("output.jpg");
    save_gray(plane, height, width, &input)?;
    let q = scale.to_string();
    run(&[
        "-hide_banner".as_ref(),
        "-loglevel".as_ref(),
        "error".as_ref(),
        "-i".as_ref(),
        input.as_os_str(),
        "-qscale:v".as_ref(),
        q.as_ref(),
        output.as_os_str(),
    ])?;
    read(&output)
}

/// Decodes a JPEG back to an 8-bit plane of the expected size.
pub fn decode_jpeg(bytes: &[u8], height: usize, width: usize) -> Result<Vec<u8>> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Jpeg)
        .map_err(|e| NvpError::Image {
            path: "<jpeg payload>".into(),
            source: e,
        })?
        .to_luma8();
    if img.dimensions() != (width as u32, height as u32) {
        return Err(NvpError::shape(
            "decoded jpeg",
            format!("{width}x{height}"),
            format!("{}x{}", img.width(), img.height()),
        ));
    }
    Ok(img.into_raw())
}

/// Encodes a grayscale frame sequence with H.264, no B-frames:
/// `ffmpeg -framerate FR -i INPUT/f%05d.png -c:v libx264 -x264-params bframes=0 -crf CRF OUTPUT.mp4`.
pub fn encode_gray_video(
    frames: &[Vec<u8>],
    height: usize,
    width: usize,
    fr: u32,
    crf: u32,
) -> Result<Vec<u8>> {
    let dir = scratch()?;
    for (i, f) in frames.iter().enumerate() {
        save_gray(f, height, width, &dir.path().join(format!("f{i:05}.png")))?;
    }
    let pattern = dir.path().join("f%05d.png");
    let output = dir.path().join("output.mp4");
    let (fr, crf) = (fr.to_string(), crf.to_string());
    run(&[
        "-hide_banner".as_ref(),
        "-loglevel".as_ref(),
        "error".as_ref(),
        "-framerate".as_ref(),
        fr.as_ref(),
        "-i".as_ref(),
        pattern.as_os_str(),
        "-c:v".as_ref(),
        "libx264".as_ref(),
        "-x264-params".as_ref(),
        "bframes=0".as_ref(),
        "-crf".as_ref(),
        crf.as_ref(),
        "-pix_fmt".as_ref(),
        "gray".as_ref(),
        output.as_os_str(),
    ])?;
    read(&output)
}

/// Decodes an encoded gray video into `frames` planes of `height x width`.
pub fn decode_gray_video(
    bytes: &[u8],
    frames: usize,
    height: usize,
    width: usize,
) -> Result<Vec<Vec<u8>>> {
    let dir = scratch()?;
    let input = dir.path().join("input.mp4");
    let output = dir.path().join("output.raw");
    write(&input, bytes)?;
    run(&[
        "-hide_banner".as_ref(),
        "-loglevel".as_ref(),
        "error".as_ref(),
        "-i".as_ref(),
        input.as_os_str(),
        "-f".as_ref(),
        "rawvideo".as_ref(),
        "-pix_fmt".as_ref(),
        "gray".as_ref(),
        output.as_os_str(),
    ])?;
    let raw = read(&output)?;
    let n = height * width;
    if raw.len() != frames * n {
        return Err(tool_error(format!(
            "decoded {} bytes, expected {frames} frames of {width}x{height}",
            raw.len()
        )));
    }
    Ok(raw.chunks(n).map(|c| c.to_vec()).collect())
}
