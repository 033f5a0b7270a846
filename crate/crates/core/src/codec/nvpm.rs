//! NVPM: uncompressed model files and training checkpoints.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "NVPM"
//! 4       1     version (1)
//! 5       1     flags (bit 0: checkpoint section present)
//! 6       4     u32 LE length n of the config text
//! 10      n     config text, `key = value` lines
//! 10+n    4*P   every parameter as f32 LE, blocks in canonical order
//! ```
//!
//! Canonical block order: keyframe levels for `xy`, `xt`, `yt` (coarse to
//! fine, each `H_l x W_l x C` row-major), then the sparse codes
//! (`(x * ny + y) * nt + t` rows of `D`), then the head layers: synthesizer
//! weight/bias pairs followed by modulator weight/bias pairs (or the plain
//! MLP's pairs). Weights are stored `out x in` row-major.
//!
//! A checkpoint appends, after the f32 body: the iteration (u64), sampler
//! RNG seed (u64), stream (u64) and word position (u128), then per block the
//! Adam step count (u64) followed by value, first and second moments as f64.
//! Loading a checkpoint takes values from this f64 section so that training
//! resumes bit-exactly.

use super::bytes::{put_text, Reader};
use crate::config::ModelConfig;
use crate::diff_core::Real;
use crate::error::Result;
use crate::neural_field::{NvpModel, Representation};
use crate::trainer::TrainState;

pub const NVPM_MAGIC: &[u8; 4] = b"NVPM";
pub const NVPM_VERSION: u8 = 1;
const FLAG_CHECKPOINT: u8 = 1;

/// Bytes before the parameter body for a given config text length.
pub fn nvpm_header_len(config: &ModelConfig) -> usize {
    10 + config.to_kv().len()
}

fn write_header(m: &NvpModel, flags: u8) -> Vec<u8> {
    let text = m.config.to_kv();
    let mut out = Vec::with_capacity(10 + text.len() + 4 * m.param_count());
    out.extend_from_slice(NVPM_MAGIC);
    out.push(NVPM_VERSION);
    out.push(flags);
    put_text(&mut out, &text);
    for p in m.params() {
        for v in p.value.as_slice() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn serialize(m: &NvpModel) -> Vec<u8> {
    write_header(m, 0)
}

pub fn serialize_checkpoint(m: &NvpModel, state: &TrainState) -> Vec<u8> {
    let mut out = write_header(m, FLAG_CHECKPOINT);
    out.extend_from_slice(&(state.iteration as u64).to_le_bytes());
    out.extend_from_slice(&state.rng_seed.to_le_bytes());
    out.extend_from_slice(&state.rng_stream.to_le_bytes());
    out.extend_from_slice(&state.rng_position.to_le_bytes());
    for p in m.params() {
        out.extend_from_slice(&p.step_count.to_le_bytes());
        for arr in [&p.value, &p.adam_m, &p.adam_v] {
            for v in arr.as_slice() {
                out.extend_from_slice(&(*v as f64).to_le_bytes());
            }
        }
    }
    out
}

/// Parses either a plain model or a checkpoint; the returned state is
/// `Some` only for checkpoints.
pub fn deserialize_any(bytes: &[u8]) -> Result<(NvpModel, Option<TrainState>)> {
    let mut r = Reader::new("NVPM", bytes);
    r.magic(NVPM_MAGIC)?;
    r.version(NVPM_VERSION)?;
    let flags = r.u8("flags")?;
    if flags & !FLAG_CHECKPOINT != 0 {
        return Err(r.error(format!("unknown flags {flags:#04x}")));
    }
    let text_at = r.offset();
    let text = r.text("config")?;
    let config = ModelConfig::from_kv(text).map_err(|e| crate::error::NvpError::Format {
        format: "NVPM",
        offset: text_at,
        message: format!("invalid config: {e}"),
    })?;
    let mut model = NvpModel::new(config)?;
    for p in model.params_mut() {
        for v in p.value.as_mut_slice() {
            *v = r.f32("parameters")? as Real;
        }
    }
    let state = if flags & FLAG_CHECKPOINT != 0 {
        let state = TrainState {
            iteration: r.u64("iteration")? as usize,
            rng_seed: r.u64("rng seed")?,
            rng_stream: r.u64("rng stream")?,
            rng_position: r.u128("rng position")?,
        };
        for p in model.params_mut() {
            p.step_count = r.u64("step count")?;
            for arr in [&mut p.value, &mut p.adam_m, &mut p.adam_v] {
                for v in arr.as_mut_slice() {
                    *v = r.f64("optimizer state")? as Real;
                }
            }
        }
        Some(state)
    } else {
        None
    };
    r.finish()?;
    Ok((model, state))
}

pub fn deserialize(bytes: &[u8]) -> Result<NvpModel> {
    deserialize_any(bytes).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use crate::error::NvpError;
    use crate::trainer::init_model;

    fn model() -> NvpModel {
        let mut cfg = ModelConfig::for_video(4, 16, 16, Preset::S);
        cfg.hidden = 8;
        init_model(cfg, 5).unwrap()
    }

    #[test]
    fn size_is_header_plus_four_bytes_per_parameter() {
        let m = model();
        let bytes = serialize(&m);
        assert_eq!(bytes.len(), nvpm_header_len(&m.config) + 4 * m.config.param_count());
    }

    #[test]
    fn roundtrip_is_bit_identical_at_f32() {
        let m = model();
        let back = deserialize(&serialize(&m)).unwrap();
        assert_eq!(back.config, m.config);
        for (a, b) in m.params().iter().zip(back.params()) {
            for (x, y) in a.value.as_slice().iter().zip(b.value.as_slice()) {
                assert_eq!((*x as f32).to_bits(), (*y as f32).to_bits());
            }
        }
        assert_eq!(serialize(&back), serialize(&m));
    }

    #[test]
    fn checkpoint_restores_everything() {
        let mut m = model();
        for p in m.params_mut() {
            p.adam_m.fill(0.25);
            p.step_count = 7;
        }
        let state = TrainState {
            iteration: 7,
            rng_seed: 1,
            rng_stream: 2,
            rng_position: 99,
        };
        let (back, s) = deserialize_any(&serialize_checkpoint(&m, &state)).unwrap();
        assert_eq!(s, Some(state));
        assert_eq!(back, m);
        for (a, b) in m.params().iter().zip(back.params()) {
            assert_eq!(a.adam_m, b.adam_m);
            assert_eq!(a.step_count, b.step_count);
        }
    }

    #[test]
    fn errors_carry_offsets() {
        let bytes = serialize(&model());
        match deserialize(&bytes[..bytes.len() - 3]) {
            Err(NvpError::Format { offset, .. }) => assert_eq!(offset, bytes.len() - 4),
            other => panic!("{other:?}"),
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(deserialize(&bad), Err(NvpError::Format { offset: 0, .. })));
        let mut bad = bytes;
        bad[4] = 9;
        assert!(matches!(deserialize(&bad), Err(NvpError::Format { offset: 4, .. })));
    }
}
