//! Run configuration: a strict TOML document with typed sections. Unknown
//! keys are rejected, absent optional keys take documented defaults, and the
//! fully-resolved configuration is echoed next to the outputs so a run can be
//! reproduced from its artifacts.

use std::path::{Path, PathBuf};

use exad_core::autoencoder::TrainOptions;
use exad_core::explain::{DEFAULT_BASELINE_COUNT, DEFAULT_SAMPLE_COUNT};
use exad_core::ingest::DatasetFormat;
use exad_core::ocsvm::OcsvmConfig;
use exad_core::pipeline::{PipelineParams, ResidualMode, DEFAULT_GRID_SIZES};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config key {key}: {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // Scalars first so the serialized echo stays valid TOML.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub window: WindowSection,
    #[serde(default)]
    pub autoencoder: AutoencoderSection,
    #[serde(default)]
    pub ocsvm: OcsvmSection,
    #[serde(default)]
    pub residual: ResidualSection,
    #[serde(default)]
    pub explain: ExplainSection,
    #[serde(default)]
    pub gridsearch: GridSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: String,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_format() -> String {
    "csv".into()
}

fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub size: usize,
}

impl Default for WindowSection {
    fn default() -> Self {
        WindowSection { size: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoencoderSection {
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
}

impl Default for AutoencoderSection {
    fn default() -> Self {
        AutoencoderSection {
            hidden_dim: 32,
            latent_dim: 16,
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 32,
            clip_norm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcsvmSection {
    pub nu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for OcsvmSection {
    fn default() -> Self {
        let d = OcsvmConfig::default();
        OcsvmSection {
            nu: d.nu,
            gamma: d.gamma,
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualSection {
    pub mode: String,
}

impl Default for ResidualSection {
    fn default() -> Self {
        ResidualSection {
            mode: "aggregated".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainSection {
    pub baselines: usize,
    pub samples: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            baselines: DEFAULT_BASELINE_COUNT,
            samples: DEFAULT_SAMPLE_COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub candidates: Vec<usize>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            candidates: DEFAULT_GRID_SIZES.to_vec(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dataset.train_fraction > 0.0 && self.dataset.train_fraction < 1.0) {
            return Err(invalid(
                "dataset.train_fraction",
                format!("{} not in (0, 1)", self.dataset.train_fraction),
            ));
        }
        self.dataset_format()?;
        self.residual_mode()?;
        if self.window.size < 1 {
            return Err(invalid("window.size", "must be >= 1"));
        }
        let ae = &self.autoencoder;
        if ae.hidden_dim < 1 {
            return Err(invalid("autoencoder.hidden_dim", "must be >= 1"));
        }
        if ae.latent_dim < 1 {
            return Err(invalid("autoencoder.latent_dim", "must be >= 1"));
        }
        if ae.batch_size < 1 {
            return Err(invalid("autoencoder.batch_size", "must be >= 1"));
        }
        if !(ae.learning_rate > 0.0) {
            return Err(invalid("autoencoder.learning_rate", "must be > 0"));
        }
        if let Some(c) = ae.clip_norm {
            if !(c > 0.0) {
                return Err(invalid("autoencoder.clip_norm", "must be > 0"));
            }
        }
        let oc = &self.ocsvm;
        if !(oc.nu > 0.0 && oc.nu <= 1.0) {
            return Err(invalid("ocsvm.nu", format!("{} not in (0, 1]", oc.nu)));
        }
        if let Some(g) = oc.gamma {
            if !(g > 0.0) {
                return Err(invalid("ocsvm.gamma", "must be > 0"));
            }
        }
        if !(oc.tolerance > 0.0) {
            return Err(invalid("ocsvm.tolerance", "must be > 0"));
        }
        if oc.max_iterations < 1 {
            return Err(invalid("ocsvm.max_iterations", "must be >= 1"));
        }
        if self.explain.baselines < 1 {
            return Err(invalid("explain.baselines", "must be >= 1"));
        }
        if self.explain.samples < 1 {
            return Err(invalid("explain.samples", "must be >= 1"));
        }
        if self.gridsearch.candidates.is_empty() {
            return Err(invalid("gridsearch.candidates", "must be non-empty"));
        }
        if self.gridsearch.candidates.iter().any(|&c| c < 1) {
            return Err(invalid("gridsearch.candidates", "entries must be >= 1"));
        }
        Ok(())
    }

    pub fn dataset_format(&self) -> Result<DatasetFormat, ConfigError> {
        self.dataset
            .format
            .parse()
            .map_err(|e: exad_core::Error| invalid("dataset.format", e.to_string()))
    }

    pub fn residual_mode(&self) -> Result<ResidualMode, ConfigError> {
        self.residual
            .mode
            .parse()
            .map_err(|e: exad_core::Error| invalid("residual.mode", e.to_string()))
    }

    pub fn pipeline_params(&self) -> Result<PipelineParams, ConfigError> {
        Ok(PipelineParams {
            window_len: self.window.size,
            hidden_dim: self.autoencoder.hidden_dim,
            latent_dim: self.autoencoder.latent_dim,
            train: TrainOptions {
                epochs: self.autoencoder.epochs,
                learning_rate: self.autoencoder.learning_rate,
                batch_size: self.autoencoder.batch_size,
                seed: 0, // train_detector derives the real seed
                clip_norm: self.autoencoder.clip_norm,
            },
            ocsvm: OcsvmConfig {
                nu: self.ocsvm.nu,
                gamma: self.ocsvm.gamma,
                tolerance: self.ocsvm.tolerance,
                max_iterations: self.ocsvm.max_iterations,
            },
            residual_mode: self.residual_mode()?,
        })
    }

    /// The fully-resolved document written alongside outputs.
    pub fn to_echo_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
