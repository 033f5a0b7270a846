//! Video containers, pixel-to-coordinate mapping and batch sampling.
//!
//! Frames are read from and written to directories of 8-bit RGB images (any
//! format the `image` crate decodes; lexicographic file order defines time) or
//! from the raw NVPV container:
//!
//! ```text
//! "NVPV" | version: u8 | T: u32 LE | H: u32 LE | W: u32 LE | T*H*W*3 bytes RGB
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::diff_core::{Real, Rng};
use crate::error::{NvpError, Result};

pub const NVPV_MAGIC: &[u8; 4] = b"NVPV";
pub const NVPV_VERSION: u8 = 1;

/// Dense `T x H x W x 3` RGB video with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<Real>,
}

/// Normalized space-time coordinate in `[0, 1]^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coordinate {
    pub x: Real,
    pub y: Real,
    pub t: Real,
}

impl Coordinate {
    pub fn new(x: Real, y: Real, t: Real) -> Self {
        Coordinate { x, y, t }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("x", self.x), ("y", self.y), ("t", self.t)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(NvpError::OutOfRange(
                    "coordinate",
                    format!("{name} = {v} not in [0, 1]"),
                ));
            }
        }
        Ok(())
    }
}

impl VideoTensor {
    pub fn zeros(frames: usize, height: usize, width: usize) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(NvpError::Config(format!(
                "video dimensions must be positive, got {frames}x{height}x{width}"
            )));
        }
        Ok(VideoTensor {
            frames,
            height,
            width,
            data: vec![0.0; frames * height * width * 3],
        })
    }

    pub fn from_vec(frames: usize, height: usize, width: usize, data: Vec<Real>) -> Result<Self> {
        let mut v = VideoTensor::zeros(frames, height, width)?;
        if data.len() != v.data.len() {
            return Err(NvpError::shape("VideoTensor::from_vec", v.data.len(), data.len()));
        }
        if let Some(bad) = data.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(NvpError::OutOfRange("pixel value", bad.to_string()));
        }
        v.data = data;
        Ok(v)
    }

    /// Builds a video by evaluating `f(t, y, x) -> rgb` at every pixel.
    pub fn from_fn(
        frames: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> [Real; 3],
    ) -> Result<Self> {
        let mut v = VideoTensor::zeros(frames, height, width)?;
        for t in 0..frames {
            for y in 0..height {
                for x in 0..width {
                    let rgb = f(t, y, x);
                    let i = v.offset(t, y, x);
                    for c in 0..3 {
                        v.data[i + c] = rgb[c].clamp(0.0, 1.0);
                    }
                }
            }
        }
        Ok(v)
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.frames, self.height, self.width)
    }

    pub fn pixel_count(&self) -> usize {
        self.frames * self.height * self.width
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * 3
    }

    #[inline]
    fn offset(&self, t: usize, y: usize, x: usize) -> usize {
        ((t * self.height + y) * self.width + x) * 3
    }

    pub fn as_slice(&self) -> &[Real] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, t: usize, y: usize, x: usize) -> [Real; 3] {
        let i = self.offset(t, y, x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Pixel by flat index `(t * H + y) * W + x`.
    #[inline]
    pub fn pixel_flat(&self, index: usize) -> [Real; 3] {
        let i = index * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn frame(&self, t: usize) -> &[Real] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    /// Splits a flat pixel index into `(t, y, x)`.
    pub fn unflatten(&self, index: usize) -> (usize, usize, usize) {
        let x = index % self.width;
        let y = (index / self.width) % self.height;
        let t = index / (self.width * self.height);
        (t, y, x)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|v| quantize_byte(*v)).collect()
    }

    pub fn from_bytes(frames: usize, height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        let mut v = VideoTensor::zeros(frames, height, width)?;
        if bytes.len() != v.data.len() {
            return Err(NvpError::shape("VideoTensor::from_bytes", v.data.len(), bytes.len()));
        }
        for (d, b) in v.data.iter_mut().zip(bytes) {
            *d = *b as Real / 255.0;
        }
        Ok(v)
    }
}

/// `round(v * 255)` with halves rounding up, clamped to `[0, 255]`.
pub fn quantize_byte(v: Real) -> u8 {
    let scaled = (v * 255.0 + 0.5).floor();
    if scaled.is_nan() {
        0
    } else {
        scaled.clamp(0.0, 255.0) as u8
    }
}

/// Center-of-cell coordinate of pixel `(i_t, i_y, i_x)`.
pub fn pixel_to_coord(
    i_t: usize,
    i_y: usize,
    i_x: usize,
    frames: usize,
    height: usize,
    width: usize,
) -> Result<Coordinate> {
    if i_t >= frames || i_y >= height || i_x >= width {
        return Err(NvpError::OutOfRange(
            "pixel index",
            format!("({i_t}, {i_y}, {i_x}) for video {frames}x{height}x{width}"),
        ));
    }
    Ok(Coordinate {
        x: (i_x as Real + 0.5) / width as Real,
        y: (i_y as Real + 0.5) / height as Real,
        t: (i_t as Real + 0.5) / frames as Real,
    })
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| NvpError::io(format!("{}", dir.display()), e))?;
    let mut files = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| NvpError::io(format!("{}", dir.display()), e))?;
        let path = entry.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(NvpError::Video {
            path: dir.to_path_buf(),
            message: "directory contains no frames".into(),
        });
    }
    Ok(files)
}

/// Loads every image in `dir` (sorted by file name) as one frame.
pub fn load_frames(dir: impl AsRef<Path>) -> Result<VideoTensor> {
    let dir = dir.as_ref();
    let files = sorted_entries(dir)?;
    let mut dims: Option<(u32, u32)> = None;
    let mut bytes = Vec::new();
    for path in &files {
        let img = image::open(path)
            .map_err(|source| NvpError::Image {
                path: path.clone(),
                source,
            })?
            .to_rgb8();
        let d = img.dimensions();
        match dims {
            None => dims = Some(d),
            Some(first) if first != d => {
                return Err(NvpError::Video {
                    path: path.clone(),
                    message: format!(
                        "frame is {}x{}, expected {}x{}",
                        d.0, d.1, first.0, first.1
                    ),
                })
            }
            _ => {}
        }
        bytes.extend_from_slice(img.as_raw());
    }
    let (w, h) = dims.expect("at least one frame");
    VideoTensor::from_bytes(files.len(), h as usize, w as usize, &bytes)
}

/// Writes one PNG per frame as `f00000.png`, `f00001.png`, ...
pub fn save_frames(v: &VideoTensor, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| NvpError::io(format!("{}", dir.display()), e))?;
    for t in 0..v.frames() {
        let bytes: Vec<u8> = v.frame(t).iter().map(|x| quantize_byte(*x)).collect();
        let img = image::RgbImage::from_raw(v.width() as u32, v.height() as u32, bytes)
            .expect("frame buffer matches dimensions");
        let path = dir.join(format!("f{t:05}.png"));
        img.save(&path)
            .map_err(|source| NvpError::Image { path, source })?;
    }
    Ok(())
}

/// Loads a per-pixel mask from a directory of grayscale frames; bytes above
/// 127 mark pixels excluded from training.
pub fn load_mask(dir: impl AsRef<Path>) -> Result<PixelMask> {
    let dir = dir.as_ref();
    let files = sorted_entries(dir)?;
    let mut dims: Option<(u32, u32)> = None;
    let mut flags = Vec::new();
    for path in &files {
        let img = image::open(path)
            .map_err(|source| NvpError::Image {
                path: path.clone(),
                source,
            })?
            .to_luma8();
        let d = img.dimensions();
        if let Some(first) = dims {
            if first != d {
                return Err(NvpError::Video {
                    path: path.clone(),
                    message: "mask frames differ in size".into(),
                });
            }
        }
        dims = Some(d);
        flags.extend(img.as_raw().iter().map(|b| *b > 127));
    }
    let (w, h) = dims.expect("at least one frame");
    PixelMask::new(files.len(), h as usize, w as usize, flags)
}

pub fn save_mask(mask: &PixelMask, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| NvpError::io(format!("{}", dir.display()), e))?;
    let (t_n, h, w) = mask.dims();
    for t in 0..t_n {
        let bytes: Vec<u8> = mask.flags[t * h * w..(t + 1) * h * w]
            .iter()
            .map(|m| if *m { 255 } else { 0 })
            .collect();
        let img = image::GrayImage::from_raw(w as u32, h as u32, bytes).expect("mask frame size");
        let path = dir.join(format!("m{t:05}.png"));
        img.save(&path)
            .map_err(|source| NvpError::Image { path, source })?;
    }
    Ok(())
}

pub fn write_nvpv(v: &VideoTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(17 + v.data.len());
    out.extend_from_slice(NVPV_MAGIC);
    out.push(NVPV_VERSION);
    for d in [v.frames, v.height, v.width] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend(v.to_bytes());
    let mut f =
        fs::File::create(path).map_err(|e| NvpError::io(format!("{}", path.display()), e))?;
    f.write_all(&out)
        .map_err(|e| NvpError::io(format!("{}", path.display()), e))
}

pub fn decode_nvpv(bytes: &[u8]) -> Result<VideoTensor> {
    let err = |offset: usize, message: &str| NvpError::Format {
        format: "NVPV",
        offset,
        message: message.into(),
    };
    if bytes.len() < 17 {
        return Err(err(bytes.len(), "truncated header"));
    }
    if &bytes[..4] != NVPV_MAGIC {
        return Err(err(0, "bad magic"));
    }
    if bytes[4] != NVPV_VERSION {
        return Err(err(4, &format!("unsupported version {}", bytes[4])));
    }
    let dim = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (t, h, w) = (dim(5), dim(9), dim(13));
    let expected = t
        .checked_mul(h)
        .and_then(|x| x.checked_mul(w))
        .and_then(|x| x.checked_mul(3))
        .ok_or_else(|| err(5, "dimensions overflow"))?;
    if bytes.len() - 17 != expected {
        return Err(err(
            bytes.len().min(17 + expected),
            &format!("payload is {} bytes, expected {expected}", bytes.len() - 17),
        ));
    }
    VideoTensor::from_bytes(t, h, w, &bytes[17..])
}

pub fn read_nvpv(path: impl AsRef<Path>) -> Result<VideoTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| NvpError::io(format!("{}", path.display()), e))?;
    decode_nvpv(&bytes)
}

/// Loads either a frame directory or an NVPV file.
pub fn load_video(path: impl AsRef<Path>) -> Result<VideoTensor> {
    let path = path.as_ref();
    if path.is_dir() {
        load_frames(path)
    } else if path.is_file() {
        read_nvpv(path)
    } else {
        Err(NvpError::Video {
            path: path.to_path_buf(),
            message: "no such file or directory".into(),
        })
    }
}

/// Per-pixel exclusion flags (`true` = never sampled).
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMask {
    frames: usize,
    height: usize,
    width: usize,
    flags: Vec<bool>,
}

impl PixelMask {
    pub fn new(frames: usize, height: usize, width: usize, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != frames * height * width {
            return Err(NvpError::shape(
                "PixelMask::new",
                frames * height * width,
                flags.len(),
            ));
        }
        Ok(PixelMask {
            frames,
            height,
            width,
            flags,
        })
    }

    pub fn empty(frames: usize, height: usize, width: usize) -> Self {
        PixelMask {
            frames,
            height,
            width,
            flags: vec![false; frames * height * width],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.frames, self.height, self.width)
    }

    #[inline]
    pub fn is_masked(&self, index: usize) -> bool {
        self.flags[index]
    }

    pub fn masked_count(&self) -> usize {
        self.flags.iter().filter(|m| **m).count()
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }
}

/// Sampled training pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelBatch {
    pub coords: Vec<Coordinate>,
    pub targets: Vec<[Real; 3]>,
    /// Flat pixel index of each sample.
    pub indices: Vec<usize>,
}

impl PixelBatch {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Uniform sampler (with replacement) over the unmasked pixels of a video.
#[derive(Debug, Clone)]
pub struct PixelSampler {
    allowed: Option<Vec<usize>>,
    total: usize,
}

impl PixelSampler {
    pub fn new(v: &VideoTensor, mask: Option<&PixelMask>) -> Result<Self> {
        let total = v.pixel_count();
        let allowed = match mask {
            None => None,
            Some(m) => {
                if m.dims() != v.dims() {
                    return Err(NvpError::shape(
                        "mask dimensions",
                        format!("{:?}", v.dims()),
                        format!("{:?}", m.dims()),
                    ));
                }
                let idx: Vec<usize> = (0..total).filter(|i| !m.is_masked(*i)).collect();
                if idx.is_empty() {
                    return Err(NvpError::Config("mask excludes every pixel".into()));
                }
                Some(idx)
            }
        };
        Ok(PixelSampler { allowed, total })
    }

    pub fn available(&self) -> usize {
        self.allowed.as_ref().map_or(self.total, |a| a.len())
    }

    pub fn sample(&self, v: &VideoTensor, n: usize, rng: &mut Rng) -> PixelBatch {
        let mut batch = PixelBatch {
            coords: Vec::with_capacity(n),
            targets: Vec::with_capacity(n),
            indices: Vec::with_capacity(n),
        };
        let (tn, h, w) = v.dims();
        for _ in 0..n {
            let index = match &self.allowed {
                None => rng.below(self.total),
                Some(a) => a[rng.below(a.len())],
            };
            let (t, y, x) = v.unflatten(index);
            batch.coords.push(
                pixel_to_coord(t, y, x, tn, h, w).expect("sampled index is in range"),
            );
            batch.targets.push(v.pixel_flat(index));
            batch.indices.push(index);
        }
        batch
    }
}

/// Samples `n` pixels uniformly with replacement, skipping masked pixels.
pub fn sample_batch(
    v: &VideoTensor,
    n: usize,
    rng: &mut Rng,
    mask: Option<&PixelMask>,
) -> Result<PixelBatch> {
    if n == 0 {
        return Err(NvpError::OutOfRange("batch size", "0".into()));
    }
    Ok(PixelSampler::new(v, mask)?.sample(v, n, rng))
}

/// Deterministic synthetic videos used for testing and demos.
pub mod synthetic {
    use super::*;

    const TAU: Real = std::f64::consts::TAU as Real;

    pub fn constant(frames: usize, height: usize, width: usize, rgb: [Real; 3]) -> VideoTensor {
        VideoTensor::from_fn(frames, height, width, |_, _, _| rgb).expect("positive dims")
    }

    /// Smooth color ramp with finer static detail on top.
    fn background(u: Real, v: Real) -> [Real; 3] {
        let a = (TAU * (5.0 * u + 3.0 * v)).sin();
        let b = (TAU * 7.0 * u).sin() * (TAU * 6.0 * v).cos();
        [
            0.35 + 0.25 * u + 0.06 * a + 0.05 * b,
            0.40 + 0.20 * v - 0.05 * a + 0.06 * b,
            0.55 - 0.15 * u + 0.04 * a - 0.05 * b,
        ]
    }

    /// Static background plus a 2D sinusoid translating along x by one period
    /// over the clip.
    pub fn structured(frames: usize, height: usize, width: usize) -> VideoTensor {
        VideoTensor::from_fn(frames, height, width, |t, y, x| {
            let u = (x as Real + 0.5) / width as Real;
            let v = (y as Real + 0.5) / height as Real;
            let s = (t as Real + 0.5) / frames as Real;
            let wave = (TAU * (3.0 * u - s)).sin() * (TAU * 2.0 * v).cos();
            let bg = background(u, v);
            [bg[0] + 0.12 * wave, bg[1] + 0.08 * wave, bg[2] - 0.10 * wave]
        })
        .expect("positive dims")
    }

    /// Static background for [`moving_square`].
    pub fn textured_background(frames: usize, height: usize, width: usize) -> VideoTensor {
        VideoTensor::from_fn(frames, height, width, |_, y, x| {
            let u = (x as Real + 0.5) / width as Real;
            let v = (y as Real + 0.5) / height as Real;
            let bg = background(u, v);
            let tex = 0.08 * (TAU * 3.0 * u).sin() * (TAU * 2.0 * v).sin();
            [bg[0] + tex, bg[1] - tex, bg[2] + 0.5 * tex]
        })
        .expect("positive dims")
    }

    /// Square side length, in pixels, of the occluder in [`moving_square`].
    pub fn square_side(height: usize, width: usize) -> usize {
        (height.min(width) / 4).max(1)
    }

    /// Top-left corner of the moving square at frame `t`.
    fn square_origin(t: usize, frames: usize, height: usize, width: usize) -> (usize, usize) {
        let side = square_side(height, width);
        let span_x = width - side;
        let span_y = height - side;
        let p = if frames > 1 {
            t as Real / (frames - 1) as Real
        } else {
            0.0
        };
        let x0 = (p * span_x as Real).round() as usize;
        let y0 = ((0.25 + 0.5 * p) * span_y as Real).round() as usize;
        (y0, x0)
    }

    /// Textured static background with a solid square sweeping across it,
    /// plus the mask covering the square.
    pub fn moving_square(
        frames: usize,
        height: usize,
        width: usize,
    ) -> (VideoTensor, PixelMask, VideoTensor) {
        let clean = textured_background(frames, height, width);
        let side = square_side(height, width);
        let mut flags = vec![false; frames * height * width];
        let video = VideoTensor::from_fn(frames, height, width, |t, y, x| {
            let (y0, x0) = square_origin(t, frames, height, width);
            if y >= y0 && y < y0 + side && x >= x0 && x < x0 + side {
                flags[(t * height + y) * width + x] = true;
                [0.9, 0.1, 0.1]
            } else {
                clean.pixel(t, y, x)
            }
        })
        .expect("positive dims");
        let mask = PixelMask::new(frames, height, width, flags).expect("mask length");
        (video, mask, clean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_to_coord_centers() {
        let c = pixel_to_coord(0, 0, 0, 2, 2, 2).unwrap();
        assert_eq!(c, Coordinate::new(0.25, 0.25, 0.25));
        let c = pixel_to_coord(1, 1, 1, 2, 2, 2).unwrap();
        assert_eq!(c, Coordinate::new(0.75, 0.75, 0.75));
        let c = pixel_to_coord(0, 0, 0, 1, 1, 1920).unwrap();
        assert_eq!(c.x, 0.5 / 1920.0);
        assert!(pixel_to_coord(2, 0, 0, 2, 2, 2).is_err());
    }

    #[test]
    fn byte_mapping() {
        assert_eq!(quantize_byte(1.0), 255);
        assert_eq!(quantize_byte(0.5), 128);
        assert_eq!(quantize_byte(0.0), 0);
        assert_eq!(quantize_byte(1.7), 255);
        assert_eq!(quantize_byte(-0.2), 0);
        let v = VideoTensor::from_bytes(1, 1, 1, &[255, 128, 0]).unwrap();
        assert_eq!(v.pixel(0, 0, 0)[0], 1.0);
        assert!((v.pixel(0, 0, 0)[1] - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn single_pixel_batch_repeats() {
        let v = synthetic::constant(1, 1, 1, [0.2, 0.4, 0.6]);
        let mut rng = Rng::new(0);
        let b = sample_batch(&v, 4, &mut rng, None).unwrap();
        assert_eq!(b.len(), 4);
        assert!(b.targets.iter().all(|t| *t == [0.2, 0.4, 0.6]));
    }

    #[test]
    fn same_seed_same_batch() {
        let v = synthetic::structured(4, 8, 8);
        let a = sample_batch(&v, 64, &mut Rng::new(5), None).unwrap();
        let b = sample_batch(&v, 64, &mut Rng::new(5), None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mask_hides_left_half() {
        let v = synthetic::structured(3, 6, 10);
        let flags: Vec<bool> = (0..v.pixel_count())
            .map(|i| v.unflatten(i).2 < 5)
            .collect();
        let mask = PixelMask::new(3, 6, 10, flags).unwrap();
        let b = sample_batch(&v, 10_000, &mut Rng::new(1), Some(&mask)).unwrap();
        assert!(b.coords.iter().all(|c| c.x > 0.5));
    }

    #[test]
    fn full_mask_is_an_error() {
        let v = synthetic::constant(1, 2, 2, [0.0; 3]);
        let mask = PixelMask::new(1, 2, 2, vec![true; 4]).unwrap();
        assert!(sample_batch(&v, 1, &mut Rng::new(0), Some(&mask)).is_err());
    }

    #[test]
    fn sampling_is_uniform_within_three_sigma() {
        let v = synthetic::constant(2, 2, 4, [0.0; 3]);
        let n = 40_000;
        let b = sample_batch(&v, n, &mut Rng::new(77), None).unwrap();
        let mut counts = vec![0usize; v.pixel_count()];
        for i in &b.indices {
            counts[*i] += 1;
        }
        let p = 1.0 / v.pixel_count() as f64;
        let mean = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sigma, "{c} vs {mean}");
        }
    }

    #[test]
    fn nvpv_rejects_garbage() {
        assert!(decode_nvpv(b"NVPX\x01").is_err());
        let mut bytes = b"NVPV\x01".to_vec();
        for d in [1u32, 1, 2] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        bytes.extend_from_slice(&[0; 5]);
        let err = decode_nvpv(&bytes).unwrap_err();
        assert!(err.to_string().contains("expected 6"));
    }

    #[test]
    fn moving_square_mask_matches_occluder() {
        let (video, mask, clean) = synthetic::moving_square(4, 16, 16);
        assert_eq!(mask.masked_count(), 4 * 16);
        for i in 0..video.pixel_count() {
            if !mask.is_masked(i) {
                assert_eq!(video.pixel_flat(i), clean.pixel_flat(i));
            }
        }
    }
}
