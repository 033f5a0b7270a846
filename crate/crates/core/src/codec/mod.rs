//! Model files, 8-bit grid quantization and compressed containers.
//!
//! [`serialize`] writes the uncompressed NVPM format (also used for training
//! checkpoints). [`compress`] quantizes the latent grids and codes them either
//! with a built-in deflate stream or through `ffmpeg` (JPEG for keyframes,
//! H.264 for the sparse grid), producing an NVPC container.

mod bytes;
pub mod external;
mod nvpc;
mod nvpm;
mod quant;

pub use nvpc::{
    bpp, bpp_of_bytes, compress, decompress, export_keyframes, quantized_copy, CodecBackend,
    CodecSettings, CompressedModel, GridPayload, NVPC_MAGIC, NVPC_VERSION,
};
pub use nvpm::{
    deserialize, deserialize_any, nvpm_header_len, serialize, serialize_checkpoint, NVPM_MAGIC,
    NVPM_VERSION,
};
pub use quant::{dequantize_byte, dequantize_grid, quantize_grid, QuantizedGrid};

use std::path::Path;

use crate::error::{NvpError, Result};
use crate::neural_field::NvpModel;
use crate::trainer::TrainState;

pub fn save_model(m: &NvpModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, serialize(m))
        .map_err(|e| NvpError::io(format!("writing {}", path.display()), e))
}

pub fn save_checkpoint(m: &NvpModel, state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, serialize_checkpoint(m, state))
        .map_err(|e| NvpError::io(format!("writing {}", path.display()), e))
}

/// Loads a model or checkpoint file.
pub fn load_model(path: impl AsRef<Path>) -> Result<(NvpModel, Option<TrainState>)> {
    let path = path.as_ref();
    let bytes =
        std::fs::read(path).map_err(|e| NvpError::io(format!("reading {}", path.display()), e))?;
    deserialize_any(&bytes)
}
