use crate::diff_core::{Matrix, Real};
use crate::error::{NvpError, Result};

/// A grid of latent codes reduced to one byte per entry.
///
/// Codes arrive as a `rows x channels` matrix (one row per grid cell).
/// Bytes are stored channel-major: the `rows` bytes of channel 0, then
/// channel 1, and so on, so each channel is a contiguous 8-bit plane.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedGrid {
    pub rows: usize,
    pub channels: usize,
    pub scale: Vec<f32>,
    pub offset: Vec<f32>,
    pub bytes: Vec<u8>,
}

impl QuantizedGrid {
    pub fn plane(&self, channel: usize) -> &[u8] {
        &self.bytes[channel * self.rows..(channel + 1) * self.rows]
    }
}

/// Dequantized value of byte `b`. Evaluated in single precision so that
/// the endpoints of a channel's range come back exactly.
#[inline]
pub fn dequantize_byte(b: u8, scale: f32, offset: f32) -> Real {
    (offset + b as f32 * scale) as Real
}

/// Per-channel affine 8-bit quantization: `scale = (max - min) / 255`,
/// `offset = min`. A constant channel gets `scale = 1` and all-zero bytes.
pub fn quantize_grid(codes: &Matrix) -> Result<QuantizedGrid> {
    if !codes.is_finite() {
        return Err(NvpError::OutOfRange(
            "latent codes",
            "non-finite value in grid".into(),
        ));
    }
    let (rows, channels) = codes.shape();
    let mut scale = Vec::with_capacity(channels);
    let mut offset = Vec::with_capacity(channels);
    let mut bytes = vec![0u8; rows * channels];
    for c in 0..channels {
        let column = (0..rows).map(|r| codes.get(r, c) as f32);
        let (lo, hi) = column.fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        if rows == 0 || hi <= lo {
            scale.push(1.0);
            offset.push(if rows == 0 { 0.0 } else { lo });
            continue;
        }
        let s = (hi - lo) / 255.0;
        for r in 0..rows {
            let q = ((codes.get(r, c) as f32 - lo) / s).round();
            bytes[c * rows + r] = q.clamp(0.0, 255.0) as u8;
        }
        scale.push(s);
        offset.push(lo);
    }
    Ok(QuantizedGrid {
        rows,
        channels,
        scale,
        offset,
        bytes,
    })
}

pub fn dequantize_grid(q: &QuantizedGrid) -> Result<Matrix> {
    if q.bytes.len() != q.rows * q.channels
        || q.scale.len() != q.channels
        || q.offset.len() != q.channels
    {
        return Err(NvpError::shape(
            "dequantize_grid",
            q.rows * q.channels,
            q.bytes.len(),
        ));
    }
    let mut m = Matrix::zeros(q.rows, q.channels);
    for c in 0..q.channels {
        for (r, b) in q.plane(c).iter().enumerate() {
            m.set(r, c, dequantize_byte(*b, q.scale[c], q.offset[c]));
        }
    }
    Ok(m)
}
