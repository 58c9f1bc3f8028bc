//! One TOML document holding every run knob.
//!
//! Missing keys take their defaults, unknown keys are rejected. Command-line
//! flags are applied on top of a parsed document by the caller, so the
//! precedence is flags, then file, then defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::BenchConfig;
use crate::error::{Error, Result};
use crate::inject::InjectionConfig;
use crate::model::ModelConfig;
use crate::pipeline::Experiment;
use crate::scoring::{ScoreConfig, ThresholdRule, Variant};
use crate::synthetic::SyntheticConfig;
use crate::training::{Precision, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory read by every subcommand except `bench` and `generate`.
    pub data: Option<PathBuf>,
    /// Directory receiving outputs.
    pub output: Option<PathBuf>,
    /// Checkpoint path; defaults to `model.ckpt` inside the output directory.
    pub checkpoint: Option<PathBuf>,
    /// Share of snapshots used for training; the rest are scored.
    pub train_ratio: f64,
    /// Worker thread cap; 0 uses every core.
    pub threads: usize,
    pub precision: Precision,
    pub threshold_rule: ThresholdRule,
    /// Variants applied, in order, to the model section.
    pub ablate: Vec<Variant>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub score: ScoreConfig,
    pub injection: InjectionConfig,
    pub synthetic: SyntheticConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            output: None,
            checkpoint: None,
            train_ratio: 0.5,
            threads: 0,
            precision: Precision::default(),
            threshold_rule: ThresholdRule::default(),
            ablate: Vec::new(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            score: ScoreConfig::default(),
            injection: InjectionConfig::default(),
            synthetic: SyntheticConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Checks the knobs that do not depend on a dataset.
    pub fn validate(&self) -> Result<()> {
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::Config(format!("train ratio {} outside (0, 1)", self.train_ratio)));
        }
        self.effective_model().validate()?;
        self.train.validate()?;
        self.score.validate()?;
        self.injection.validate()
    }

    /// The model section with every selected ablation applied.
    pub fn effective_model(&self) -> ModelConfig {
        self.ablate.iter().fold(self.model.clone(), |m, v| v.apply(&m))
    }

    pub fn experiment(&self) -> Experiment {
        Experiment {
            model: self.effective_model(),
            train: self.train,
            score: self.score,
            train_ratio: self.train_ratio,
            threshold_rule: self.threshold_rule,
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.output_dir().join("model.ckpt"))
    }

    pub fn data_dir(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::Config("no dataset directory given (set `data` or pass --data)".into()))
    }
}
