//! Frame quality metrics and the CSV tables built from them.

use std::fmt::Write as _;

use crate::diff_core::Real;
use crate::error::{NvpError, Result};
use crate::video_io::VideoTensor;

/// PSNR reported for identical signals.
pub const PSNR_CAP: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

pub fn mse(a: &[Real], b: &[Real]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(NvpError::shape("mse", a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// `-10 log10(mse)` for signals in `[0, 1]`, capped at [`PSNR_CAP`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (-10.0 * mse.log10()).min(PSNR_CAP)
    }
}

pub fn psnr(a: &[Real], b: &[Real]) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable "valid" Gaussian filter of an `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            horiz[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * horiz[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn luma(frame: &[Real]) -> Vec<f64> {
    frame
        .chunks_exact(3)
        .map(|p| (p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0)
        .collect()
}

/// Mean SSIM of the luma planes `(R + G + B) / 3` of two `height x width`
/// RGB frames, with an 11x11 Gaussian window (sigma 1.5) and dynamic range 1.
pub fn ssim(a: &[Real], b: &[Real], height: usize, width: usize) -> Result<f64> {
    if a.len() != b.len() || a.len() != height * width * 3 {
        return Err(NvpError::shape("ssim", height * width * 3, format!("{} / {}", a.len(), b.len())));
    }
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(NvpError::OutOfRange(
            "ssim frame size",
            format!("{height}x{width} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    let k = gaussian_window();
    let la = luma(a);
    let lb = luma(b);
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter_valid(&la, height, width, &k);
    let mu_b = filter_valid(&lb, height, width, &k);
    let e_aa = filter_valid(&prod(&la, &la), height, width, &k);
    let e_bb = filter_valid(&prod(&lb, &lb), height, width, &k);
    let e_ab = filter_valid(&prod(&la, &lb), height, width, &k);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Per-frame quality of a reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMetrics {
    pub frame: usize,
    pub psnr: f64,
    /// `None` when the frame is smaller than the SSIM window.
    pub ssim: Option<f64>,
}

pub fn per_frame_curve(recon: &VideoTensor, truth: &VideoTensor) -> Result<Vec<FrameMetrics>> {
    if recon.dims() != truth.dims() {
        return Err(NvpError::shape(
            "per_frame_curve",
            format!("{:?}", truth.dims()),
            format!("{:?}", recon.dims()),
        ));
    }
    let (h, w) = (truth.height(), truth.width());
    (0..truth.frames())
        .map(|t| {
            let a = recon.frame(t);
            let b = truth.frame(t);
            let ssim = if h >= SSIM_WINDOW && w >= SSIM_WINDOW {
                Some(ssim(a, b, h, w)?)
            } else {
                None
            };
            Ok(FrameMetrics {
                frame: t,
                psnr: psnr(a, b)?,
                ssim,
            })
        })
        .collect()
}

/// Arithmetic mean of per-frame PSNR.
pub fn video_psnr(recon: &VideoTensor, truth: &VideoTensor) -> Result<f64> {
    let curve = per_frame_curve_psnr_only(recon, truth)?;
    Ok(curve.iter().sum::<f64>() / curve.len() as f64)
}

pub(crate) fn per_frame_curve_psnr_only(
    recon: &VideoTensor,
    truth: &VideoTensor,
) -> Result<Vec<f64>> {
    if recon.dims() != truth.dims() {
        return Err(NvpError::shape(
            "video_psnr",
            format!("{:?}", truth.dims()),
            format!("{:?}", recon.dims()),
        ));
    }
    (0..truth.frames())
        .map(|t| psnr(recon.frame(t), truth.frame(t)))
        .collect()
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Formats with six significant digits.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn frame_curve_csv(curve: &[FrameMetrics]) -> String {
    let mut s = String::from("frame,psnr,ssim\n");
    for m in curve {
        let ssim = m.ssim.map(sig6).unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", m.frame, sig6(m.psnr), ssim);
    }
    s
}

/// One rate-distortion measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct RdPoint {
    pub bpp: f64,
    pub psnr: f64,
    pub ssim: Option<f64>,
    pub label: String,
}

/// CSV with columns `bpp,psnr,ssim,label`, sorted by ascending BPP.
pub fn rd_table(points: &[RdPoint]) -> Result<String> {
    if points.is_empty() {
        return Err(NvpError::Config("rate-distortion table needs at least one point".into()));
    }
    let mut sorted: Vec<&RdPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
    let mut s = String::from("bpp,psnr,ssim,label\n");
    for p in sorted {
        let ssim = p.ssim.map(sig6).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", sig6(p.bpp), sig6(p.psnr), ssim, p.label);
    }
    Ok(s)
}
