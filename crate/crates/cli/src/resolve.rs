//! Layering of defaults, config file and flags into one resolved config.

use std::fs;
use std::path::Path;

use nvp::config::{parse_kv, ModelConfig, Preset, TrainConfig};

use crate::UsageError;

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub preset: Preset,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Resolved {
    pub fn to_kv(&self) -> String {
        let preset = match self.preset {
            Preset::S => "S",
            Preset::L => "L",
        };
        format!(
            "preset = {preset}\n{}{}",
            self.model.to_kv(),
            self.train.to_kv()
        )
    }
}

/// Desk defaults for a `frames x height x width` video, then `file` entries,
/// then `overrides` (`key=value` strings, applied in order).
pub fn resolve(
    dims: (usize, usize, usize),
    preset_flag: Option<Preset>,
    file: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<Resolved, UsageError> {
    let entries = match file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            parse_kv(&text)
                .map_err(|e| UsageError(format!("{}: {e}", path.display())))?
                .into_iter()
                .map(|(line, k, v)| (format!("{}:{line}", path.display()), k, v))
                .collect()
        }
        None => Vec::new(),
    };
    let flag_entries = overrides
        .iter()
        .map(|(k, v)| ("flag".to_string(), k.clone(), v.clone()));
    let all: Vec<(String, String, String)> = entries.into_iter().chain(flag_entries).collect();

    // The preset picks the base architecture, so it has to be known first.
    let mut preset = Preset::S;
    for (at, k, v) in &all {
        if k == "preset" {
            preset = v.parse().map_err(|e| UsageError(format!("{at}: {e}")))?;
        }
    }
    if let Some(p) = preset_flag {
        preset = p;
    }

    let (t, h, w) = dims;
    let mut model = ModelConfig::for_video(t, h, w, preset);
    let mut train = TrainConfig::default();
    for (at, k, v) in &all {
        if k == "preset" {
            continue;
        }
        let known = model
            .set(k, v)
            .and_then(|m| if m { Ok(true) } else { train.set(k, v) })
            .map_err(|e| UsageError(format!("{at}: {e}")))?;
        if !known {
            return Err(UsageError(format!("{at}: unknown key `{k}`")));
        }
    }
    if (model.frames, model.height, model.width) != dims {
        return Err(UsageError(format!(
            "config says {}x{}x{} but the input video is {t}x{h}x{w}",
            model.frames, model.height, model.width
        )));
    }
    model.validate().map_err(|e| UsageError(e.to_string()))?;
    train.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(Resolved {
        preset,
        model,
        train,
    })
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}
