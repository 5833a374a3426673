//! Training run configuration and the manifest written alongside results.

use std::path::PathBuf;

use layerdep::ae::{AeConfig, GeneratorConfig};
use serde::{Deserialize, Serialize};

/// Where training frames come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Generate a synthetic dataset in memory.
    Generate(GeneratorConfig),
    /// Load a dataset directory written by `layerdep generate`.
    Path(PathBuf),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Generate(GeneratorConfig::default())
    }
}

/// The `--config` file of `layerdep train`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: AeConfig,
    pub data: DataSource,
}

/// Written before training starts. `config` has every default filled in and
/// can be passed back to `train --config` as is; the manifest file itself is
/// accepted too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub seed: u64,
    pub fingerprint: String,
    pub config: TrainConfig,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

pub fn artifact_version() -> String {
    format!("layerdep {}", env!("CARGO_PKG_VERSION"))
}

/// Parses a training config, or the config embedded in a manifest.
pub fn parse_train_config(text: &str) -> serde_json::Result<TrainConfig> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    if value.get("subcommand").is_some() {
        Ok(serde_json::from_value::<RunManifest>(value)?.config)
    } else {
        serde_json::from_value(value)
    }
}
