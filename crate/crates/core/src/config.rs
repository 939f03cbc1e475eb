//! TOML run configuration.
//!
//! ```toml
//! [data]
//! path = "data/youtube"      # or a [data.synth] table instead
//! format = "wrench-json"
//!
//! [[lfs]]
//! type = "keyword"
//! terms = ["subscribe", "check out"]
//! class = "spam"
//!
//! [encoder]
//! dim = 64
//!
//! [train]
//! learning_rate = 1e-3
//! noise_lambda = 0.1
//! ```
//!
//! Every section is optional and unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, synth_dataset, DataFormat, SplitSet, SynthSpec};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::lf_engine::LfSpec;
use crate::model::ModelConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Dataset directory; relative paths resolve against the config file.
    pub path: Option<PathBuf>,
    pub format: DataFormat,
    /// Generate a synthetic dataset from the train seed instead of loading one.
    pub synth: Option<SynthSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Memorization threshold: a match is predicted when `p > k / m`.
    pub threshold_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { threshold_k: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub lfs: Vec<LfSpec>,
    pub encoder: EncoderConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let Some(p) = &cfg.data.path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.data.path = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data.path, &self.data.synth) {
            (Some(_), Some(_)) => return Err(Error::Config("data.path and data.synth are mutually exclusive".into())),
            (None, Some(s)) => s.validate()?,
            _ => {}
        }
        self.encoder.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.eval.threshold_k == 0 {
            return Err(Error::Config("eval.threshold_k must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Single-line JSON echo stored in checkpoints and manifests.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Loads the configured dataset, or generates it from `train.seed`.
    pub fn load_data(&self) -> Result<SplitSet> {
        match (&self.data.path, &self.data.synth) {
            (Some(path), None) => load_dataset(path, self.data.format),
            (None, Some(spec)) => synth_dataset(spec, self.train.seed),
            (None, None) => Err(Error::Config("config has neither data.path nor data.synth".into())),
            (Some(_), Some(_)) => Err(Error::Config("data.path and data.synth are mutually exclusive".into())),
        }
    }
}
