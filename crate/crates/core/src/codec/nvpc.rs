//! NVPC: compressed models.
//!
//! Latent grids are quantized to 8 bits per channel and handed to a codec;
//! field weights are stored as raw f32. Decompression dequantizes the grids
//! and copies the field weights; nothing is re-trained.
//!
//! ```text
//! "NVPC" | version u8 (1) | u32 n | config text (n bytes) | u8 grid count
//! per grid (xy, xt, yt, sparse; only those present):
//!     u8 codec id (0 lossless, 1 image_external, 2 video_external)
//!     u32 quality a (SCALE, or FR) | u32 quality b (CRF, or 0)
//!     u32 q | q x (f32 scale, f32 offset)      one pair per level/channel
//!     u32 k | k x (u32 len, len bytes)         payloads
//! u32 f | f x f32                              field weights, canonical order
//! ```
//!
//! Keyframe quantization pairs run level-major (`level * C + channel`). A
//! lossless keyframe payload is the deflated concatenation of all level
//! planes; the image path emits one JPEG per level and channel. The sparse
//! grid's planes are `nt` frames of `ny x nx`; lossless deflates them all,
//! the video path emits one H.264 stream per channel.

use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use rayon::prelude::*;

use super::bytes::{put_text, Reader};
use super::external;
use super::quant::{dequantize_byte, quantize_grid, QuantizedGrid};
use crate::config::{ModelConfig, Preset};
use crate::diff_core::{Matrix, Real};
use crate::error::{NvpError, Result};
use crate::latent_grids::{KeyframeGrid, SparseGrid3D};
use crate::neural_field::NvpModel;

pub const NVPC_MAGIC: &[u8; 4] = b"NVPC";
pub const NVPC_VERSION: u8 = 1;

/// How one grid is coded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecBackend {
    Lossless,
    /// JPEG through the external tool at quality `-qscale:v scale`.
    ImageExternal { scale: u32 },
    /// H.264 through the external tool.
    VideoExternal { fr: u32, crf: u32 },
}

impl CodecBackend {
    pub fn id(self) -> u8 {
        match self {
            CodecBackend::Lossless => 0,
            CodecBackend::ImageExternal { .. } => 1,
            CodecBackend::VideoExternal { .. } => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CodecBackend::Lossless => "lossless",
            CodecBackend::ImageExternal { .. } => "image_external",
            CodecBackend::VideoExternal { .. } => "video_external",
        }
    }

    pub fn is_external(self) -> bool {
        !matches!(self, CodecBackend::Lossless)
    }

    fn quality(self) -> (u32, u32) {
        match self {
            CodecBackend::Lossless => (0, 0),
            CodecBackend::ImageExternal { scale } => (scale, 0),
            CodecBackend::VideoExternal { fr, crf } => (fr, crf),
        }
    }

    fn from_parts(id: u8, a: u32, b: u32) -> Option<Self> {
        match id {
            0 => Some(CodecBackend::Lossless),
            1 => Some(CodecBackend::ImageExternal { scale: a }),
            2 => Some(CodecBackend::VideoExternal { fr: a, crf: b }),
            _ => None,
        }
    }
}

/// Backend choice for each grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecSettings {
    /// `xy`, `xt`, `yt`.
    pub keyframes: [CodecBackend; 3],
    pub sparse: CodecBackend,
}

impl CodecSettings {
    pub fn lossless() -> Self {
        CodecSettings {
            keyframes: [CodecBackend::Lossless; 3],
            sparse: CodecBackend::Lossless,
        }
    }

    /// External codecs with the published per-preset quality values.
    pub fn external(preset: Preset) -> Self {
        let (scales, fr, crf) = match preset {
            Preset::S => ([2, 3, 3], 25, 21),
            Preset::L => ([2, 2, 2], 40, 21),
        };
        CodecSettings {
            keyframes: scales.map(|scale| CodecBackend::ImageExternal { scale }),
            sparse: CodecBackend::VideoExternal { fr, crf },
        }
    }

    pub fn uses_external(&self) -> bool {
        self.sparse.is_external() || self.keyframes.iter().any(|b| b.is_external())
    }

    fn validate(&self) -> Result<()> {
        if self
            .keyframes
            .iter()
            .any(|b| matches!(b, CodecBackend::VideoExternal { .. }))
        {
            return Err(NvpError::Config("keyframes take the image or lossless backend".into()));
        }
        if matches!(self.sparse, CodecBackend::ImageExternal { .. }) {
            return Err(NvpError::Config("the sparse grid takes the video or lossless backend".into()));
        }
        Ok(())
    }
}

/// One coded grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPayload {
    pub backend: CodecBackend,
    pub scale: Vec<f32>,
    pub offset: Vec<f32>,
    pub payloads: Vec<Vec<u8>>,
}

impl GridPayload {
    pub fn payload_bytes(&self) -> usize {
        self.payloads.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedModel {
    pub config: ModelConfig,
    /// `xy`, `xt`, `yt`, then sparse; absent grids are skipped.
    pub grids: Vec<GridPayload>,
    pub field: Vec<f32>,
}

fn deflate(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::best());
    enc.write_all(bytes)
        .and_then(|_| enc.finish())
        .map_err(|e| NvpError::io("deflating payload", e))
}

fn inflate(bytes: &[u8], expected: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(expected);
    DeflateDecoder::new(bytes)
        .read_to_end(&mut out)
        .map_err(|e| NvpError::io("inflating payload", e))?;
    if out.len() != expected {
        return Err(NvpError::shape("inflated payload", expected, out.len()));
    }
    Ok(out)
}

/// Quantizes every level of a keyframe grid.
fn quantize_keyframe(kf: &KeyframeGrid) -> Result<Vec<QuantizedGrid>> {
    kf.levels.iter().map(|l| quantize_grid(&l.value)).collect()
}

/// Reorders sparse codes into `nt` planes of `ny x nx` per channel.
fn sparse_planes(s: &SparseGrid3D, q: &QuantizedGrid) -> Vec<Vec<Vec<u8>>> {
    let [nx, ny, nt] = s.shape;
    (0..q.channels)
        .map(|c| {
            let plane = q.plane(c);
            (0..nt)
                .map(|k| {
                    let mut frame = Vec::with_capacity(nx * ny);
                    for j in 0..ny {
                        for i in 0..nx {
                            frame.push(plane[(i * ny + j) * nt + k]);
                        }
                    }
                    frame
                })
                .collect()
        })
        .collect()
}

fn sparse_from_planes(shape: [usize; 3], frames: &[Vec<u8>]) -> Vec<u8> {
    let [nx, ny, nt] = shape;
    let mut plane = vec![0u8; nx * ny * nt];
    for (k, frame) in frames.iter().enumerate() {
        for j in 0..ny {
            for i in 0..nx {
                plane[(i * ny + j) * nt + k] = frame[j * nx + i];
            }
        }
    }
    plane
}

enum Job<'a> {
    Keyframe(&'a KeyframeGrid, CodecBackend),
    Sparse(&'a SparseGrid3D, CodecBackend),
}

fn code_keyframe(kf: &KeyframeGrid, backend: CodecBackend) -> Result<GridPayload> {
    let levels = quantize_keyframe(kf)?;
    let scale = levels.iter().flat_map(|q| q.scale.clone()).collect();
    let offset = levels.iter().flat_map(|q| q.offset.clone()).collect();
    let payloads = match backend {
        CodecBackend::Lossless => {
            let all: Vec<u8> = levels.iter().flat_map(|q| q.bytes.iter().copied()).collect();
            vec![deflate(&all)?]
        }
        CodecBackend::ImageExternal { scale } => {
            let mut out = Vec::new();
            for (q, (h, w)) in levels.iter().zip(kf.level_dims()) {
                for c in 0..q.channels {
                    out.push(external::encode_jpeg(q.plane(c), *h, *w, scale)?);
                }
            }
            out
        }
        CodecBackend::VideoExternal { .. } => unreachable!("validated"),
    };
    Ok(GridPayload {
        backend,
        scale,
        offset,
        payloads,
    })
}

fn code_sparse(s: &SparseGrid3D, backend: CodecBackend) -> Result<GridPayload> {
    let q = quantize_grid(&s.codes.value)?;
    let payloads = match backend {
        CodecBackend::Lossless => vec![deflate(&q.bytes)?],
        CodecBackend::VideoExternal { fr, crf } => {
            let [nx, ny, _] = s.shape;
            sparse_planes(s, &q)
                .iter()
                .map(|frames| external::encode_gray_video(frames, ny, nx, fr, crf))
                .collect::<Result<_>>()?
        }
        CodecBackend::ImageExternal { .. } => unreachable!("validated"),
    };
    Ok(GridPayload {
        backend,
        scale: q.scale,
        offset: q.offset,
        payloads,
    })
}

/// Compresses the latent grids of `m` with the given backends.
pub fn compress(m: &NvpModel, settings: &CodecSettings) -> Result<CompressedModel> {
    settings.validate()?;
    if settings.uses_external() && !external::ffmpeg_available() {
        return Err(NvpError::ExternalTool {
            tool: "ffmpeg".into(),
            message: format!(
                "{} not found (set NVP_FFMPEG or add it to PATH)",
                external::ffmpeg_program().to_string_lossy()
            ),
        });
    }
    let mut jobs: Vec<Job> = m
        .keyframes
        .iter()
        .zip(settings.keyframes)
        .map(|(k, b)| Job::Keyframe(k, b))
        .collect();
    if let Some(s) = &m.sparse {
        jobs.push(Job::Sparse(s, settings.sparse));
    }
    let grids = jobs
        .par_iter()
        .map(|j| match j {
            Job::Keyframe(k, b) => code_keyframe(k, *b),
            Job::Sparse(s, b) => code_sparse(s, *b),
        })
        .collect::<Result<Vec<_>>>()?;
    let field = m
        .head
        .params()
        .iter()
        .flat_map(|p| p.value.as_slice().iter().map(|v| *v as f32))
        .collect();
    Ok(CompressedModel {
        config: m.config.clone(),
        grids,
        field,
    })
}

fn fill_keyframe(kf: &mut KeyframeGrid, g: &GridPayload) -> Result<()> {
    let c = kf.latent_dim;
    let dims = kf.level_dims().to_vec();
    let expected_pairs = dims.len() * c;
    if g.scale.len() != expected_pairs || g.offset.len() != expected_pairs {
        return Err(NvpError::shape("keyframe quantization table", expected_pairs, g.scale.len()));
    }
    let planes: Vec<Vec<u8>> = match g.backend {
        CodecBackend::Lossless => {
            let total: usize = dims.iter().map(|(h, w)| h * w * c).sum();
            let all = inflate(g.payloads.first().map_or(&[][..], |p| p), total)?;
            let mut planes = Vec::with_capacity(expected_pairs);
            let mut off = 0;
            for (h, w) in &dims {
                for _ in 0..c {
                    planes.push(all[off..off + h * w].to_vec());
                    off += h * w;
                }
            }
            planes
        }
        CodecBackend::ImageExternal { .. } => {
            if g.payloads.len() != expected_pairs {
                return Err(NvpError::shape("keyframe images", expected_pairs, g.payloads.len()));
            }
            let mut planes = Vec::with_capacity(expected_pairs);
            for (l, (h, w)) in dims.iter().enumerate() {
                for ch in 0..c {
                    planes.push(external::decode_jpeg(&g.payloads[l * c + ch], *h, *w)?);
                }
            }
            planes
        }
        CodecBackend::VideoExternal { .. } => {
            return Err(NvpError::Config("keyframe grid coded with the video backend".into()))
        }
    };
    for (l, block) in kf.levels.iter_mut().enumerate() {
        let rows = block.value.rows();
        let mut m = Matrix::zeros(rows, c);
        for ch in 0..c {
            let k = l * c + ch;
            for (r, b) in planes[k].iter().enumerate() {
                m.set(r, ch, dequantize_byte(*b, g.scale[k], g.offset[k]));
            }
        }
        block.value = m;
    }
    Ok(())
}

fn fill_sparse(s: &mut SparseGrid3D, g: &GridPayload) -> Result<()> {
    let d = s.latent_dim;
    let [nx, ny, nt] = s.shape;
    let cells = nx * ny * nt;
    if g.scale.len() != d || g.offset.len() != d {
        return Err(NvpError::shape("sparse quantization table", d, g.scale.len()));
    }
    let bytes = match g.backend {
        CodecBackend::Lossless => inflate(g.payloads.first().map_or(&[][..], |p| p), cells * d)?,
        CodecBackend::VideoExternal { .. } => {
            if g.payloads.len() != d {
                return Err(NvpError::shape("sparse videos", d, g.payloads.len()));
            }
            let mut all = Vec::with_capacity(cells * d);
            for p in &g.payloads {
                let frames = external::decode_gray_video(p, nt, ny, nx)?;
                all.extend(sparse_from_planes(s.shape, &frames));
            }
            all
        }
        CodecBackend::ImageExternal { .. } => {
            return Err(NvpError::Config("sparse grid coded with the image backend".into()))
        }
    };
    let q = QuantizedGrid {
        rows: cells,
        channels: d,
        scale: g.scale.clone(),
        offset: g.offset.clone(),
        bytes,
    };
    s.codes.value = super::quant::dequantize_grid(&q)?;
    Ok(())
}

/// Rebuilds a model: dequantized grids, field weights copied as stored.
pub fn decompress(c: &CompressedModel) -> Result<NvpModel> {
    let mut m = NvpModel::new(c.config.clone())?;
    let expected = m.keyframes.len() + usize::from(m.sparse.is_some());
    if c.grids.len() != expected {
        return Err(NvpError::shape("compressed grids", expected, c.grids.len()));
    }
    for (kf, g) in m.keyframes.iter_mut().zip(&c.grids) {
        fill_keyframe(kf, g)?;
    }
    if let Some(s) = &mut m.sparse {
        fill_sparse(s, c.grids.last().expect("counted above"))?;
    }
    let needed = m.field_params();
    if needed != c.field.len() {
        return Err(NvpError::shape("field weights", needed, c.field.len()));
    }
    let mut field = c.field.iter();
    for p in m.head.params_mut() {
        for v in p.value.as_mut_slice() {
            *v = *field.next().expect("length checked") as Real;
        }
    }
    Ok(m)
}

/// The model whose grids are replaced by their 8-bit quantized values —
/// what a lossless round trip reproduces exactly.
pub fn quantized_copy(m: &NvpModel) -> Result<NvpModel> {
    decompress(&compress(m, &CodecSettings::lossless())?)
}

impl CompressedModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(NVPC_MAGIC);
        out.push(NVPC_VERSION);
        put_text(&mut out, &self.config.to_kv());
        out.push(self.grids.len() as u8);
        for g in &self.grids {
            out.push(g.backend.id());
            let (a, b) = g.backend.quality();
            out.extend_from_slice(&a.to_le_bytes());
            out.extend_from_slice(&b.to_le_bytes());
            out.extend_from_slice(&(g.scale.len() as u32).to_le_bytes());
            for (s, o) in g.scale.iter().zip(&g.offset) {
                out.extend_from_slice(&s.to_le_bytes());
                out.extend_from_slice(&o.to_le_bytes());
            }
            out.extend_from_slice(&(g.payloads.len() as u32).to_le_bytes());
            for p in &g.payloads {
                out.extend_from_slice(&(p.len() as u32).to_le_bytes());
                out.extend_from_slice(p);
            }
        }
        out.extend_from_slice(&(self.field.len() as u32).to_le_bytes());
        for v in &self.field {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new("NVPC", bytes);
        r.magic(NVPC_MAGIC)?;
        r.version(NVPC_VERSION)?;
        let text_at = r.offset();
        let config = ModelConfig::from_kv(r.text("config")?).map_err(|e| NvpError::Format {
            format: "NVPC",
            offset: text_at,
            message: format!("invalid config: {e}"),
        })?;
        let count = r.u8("grid count")?;
        let mut grids = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let id = r.u8("codec id")?;
            let a = r.u32("codec quality")?;
            let b = r.u32("codec quality")?;
            let backend = CodecBackend::from_parts(id, a, b)
                .ok_or_else(|| r.error(format!("unknown codec id {id}")))?;
            let q = r.u32("quantization table length")? as usize;
            let mut scale = Vec::with_capacity(q);
            let mut offset = Vec::with_capacity(q);
            for _ in 0..q {
                scale.push(r.f32("quantization scale")?);
                offset.push(r.f32("quantization offset")?);
            }
            let k = r.u32("payload count")? as usize;
            let mut payloads = Vec::with_capacity(k.min(1 << 16));
            for _ in 0..k {
                let len = r.u32("payload length")? as usize;
                payloads.push(r.take(len, "payload")?.to_vec());
            }
            grids.push(GridPayload {
                backend,
                scale,
                offset,
                payloads,
            });
        }
        let f = r.u32("field weight count")? as usize;
        let mut field = Vec::with_capacity(f.min(1 << 24));
        for _ in 0..f {
            field.push(r.f32("field weights")?);
        }
        r.finish()?;
        Ok(CompressedModel {
            config,
            grids,
            field,
        })
    }

    /// Size of the serialized container in bytes.
    pub fn byte_len(&self) -> usize {
        self.to_bytes().len()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes())
            .map_err(|e| NvpError::io(format!("writing {}", path.display()), e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| NvpError::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes)
    }
}

/// Bits per pixel of a byte count over a `frames x height x width` video.
pub fn bpp_of_bytes(bytes: usize, dims: (usize, usize, usize)) -> f64 {
    let (t, h, w) = dims;
    (bytes as f64 * 8.0) / (t * h * w) as f64
}

/// Total container bits (header, payloads and field weights) per pixel.
pub fn bpp(c: &CompressedModel, dims: (usize, usize, usize)) -> f64 {
    bpp_of_bytes(c.byte_len(), dims)
}

/// Writes each keyframe level/channel as a min/max-normalized 8-bit
/// grayscale PNG named `{pair}_l{level}_c{channel}.png`.
pub fn export_keyframes(m: &NvpModel, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)
        .map_err(|e| NvpError::io(format!("creating {}", dir.display()), e))?;
    let mut written = Vec::new();
    for kf in &m.keyframes {
        for (l, q) in quantize_keyframe(kf)?.iter().enumerate() {
            let (h, w) = kf.level_dims()[l];
            for c in 0..q.channels {
                let path = dir.join(format!("{}_l{:02}_c{}.png", kf.axis_pair, l, c));
                let img = image::GrayImage::from_raw(w as u32, h as u32, q.plane(c).to_vec())
                    .expect("plane sized from level dims");
                img.save(&path).map_err(|e| NvpError::Image {
                    path: path.clone(),
                    source: e,
                })?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
