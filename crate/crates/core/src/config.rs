//! Declarative run configuration, read from strict JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::AnalysisOptions;
use crate::backend::{BackendConfig, PlantSpec};
use crate::batteries::{PrimingVariation, SnarcAxis, SpacingSchedule};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    #[default]
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimingConfig {
    pub variation: PrimingVariation,
    #[serde(default = "default_lengths")]
    pub lengths: Vec<usize>,
    #[serde(default = "default_spacings")]
    pub spacings: Vec<u32>,
    #[serde(default = "default_catch_trials")]
    pub catch_trials: usize,
    /// Targets drawn per word length.
    #[serde(default = "default_per_length")]
    pub targets_per_length: usize,
    /// Tab-separated association records; the bundled sample when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triples: Option<PathBuf>,
}

fn default_lengths() -> Vec<usize> {
    vec![4]
}
fn default_spacings() -> Vec<u32> {
    vec![5, 10, 15]
}
fn default_catch_trials() -> usize {
    100
}
fn default_per_length() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceConfig {
    pub set: String,
    #[serde(default)]
    pub spaced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnarcConfig {
    pub experiment: u8,
    pub axis: SnarcAxis,
    #[serde(default)]
    pub schedule: SpacingSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbols: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeConfig {
    pub set: String,
    #[serde(default)]
    pub spaced: bool,
    #[serde(default = "default_number_variation")]
    pub number_variation: u8,
}

fn default_number_variation() -> u8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchoringConfig {
    pub experiment: u8,
    #[serde(default = "default_min_length")]
    pub min_length: usize,
    #[serde(default = "default_max_length")]
    pub max_length: usize,
    #[serde(default = "default_per_cell")]
    pub per_cell: usize,
    #[serde(default = "default_positions")]
    pub positions: u8,
}

fn default_min_length() -> usize {
    40
}
fn default_max_length() -> usize {
    60
}
fn default_per_cell() -> usize {
    20
}
fn default_positions() -> u8 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Priming(PrimingConfig),
    Distance(DistanceConfig),
    Snarc(SnarcConfig),
    SizeCongruity(SizeConfig),
    Anchoring(AnchoringConfig),
}

impl ExperimentConfig {
    pub fn uses_randomness(&self) -> bool {
        match self {
            ExperimentConfig::Priming(p) => p.catch_trials > 0,
            ExperimentConfig::Anchoring(_) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub experiments: Vec<ExperimentConfig>,
    #[serde(default)]
    pub backend_kind: BackendKind,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock: Option<PlantSpec>,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Reads a config file. Relative corpus paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut cfg = Self::from_json(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut cfg.experiments {
            if let ExperimentConfig::Priming(PrimingConfig { triples: Some(p), .. }) = e {
                if p.is_relative() {
                    let joined = base.join(&*p);
                    *p = std::fs::canonicalize(&joined).unwrap_or(joined);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seed.is_none() && self.experiments.iter().any(ExperimentConfig::uses_randomness) {
            return Err(ConfigError::Invalid(
                "a seed is required when priming catch trials or anchoring experiments are configured".into(),
            ));
        }
        self.backend.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(m) = &self.mock {
            m.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.analysis.policy.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Digest of the effective configuration; names the run directory.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }
}
