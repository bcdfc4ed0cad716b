use std::path::{Path, PathBuf};

use serde::Deserialize;
use vreid::metrics::EvalProtocol;
use vreid::posegeom::PckParams;
use vreid::synthgen::GenSpec;
use vreid::toynet::TrainConfig;

use crate::error::CliError;

/// Everything a run can be configured with. Command-line flags override
/// the values loaded from a config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub paths: Paths,
    pub gen: Option<GenSpec>,
    /// Applies to `eval`, `rank` and the evaluation inside `train`.
    pub protocol: EvalProtocol,
    pub train: TrainConfig,
    pub pck: PckSettings,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory holding `manifest.jsonl` and `embeddings.bin`.
    pub data: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Segment, group and flip-pair tables.
    pub layout: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PckSettings {
    pub reference_ratio: f64,
    pub threshold_multiplier: f64,
}

impl Default for PckSettings {
    fn default() -> Self {
        let p = PckParams::default();
        Self { reference_ratio: p.reference_ratio, threshold_multiplier: p.threshold_multiplier }
    }
}

impl From<PckSettings> for PckParams {
    fn from(s: PckSettings) -> Self {
        PckParams { reference_ratio: s.reference_ratio, threshold_multiplier: s.threshold_multiplier }
    }
}

impl RunConfig {
    /// Reads TOML when the extension is `.toml`, JSON otherwise.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}
