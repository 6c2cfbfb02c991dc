//! Run configuration: one TOML file with `corpus`, `model`, `train`,
//! `baseline` and `experiment` tables, overridable key by key.
//!
//! Keys are addressed as `table.key` (`corpus.gen.density`, `train.lambda`).
//! `set` accepts any TOML literal; bare words are read as strings and `none`
//! clears an optional value.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::GenConfig;
use crate::model::ModelConfig;
use crate::training::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Task1,
    Task2,
}

impl Preset {
    pub fn gen(self, seed: u64) -> GenConfig {
        match self {
            Preset::Task1 => GenConfig::task1(seed),
            Preset::Task2 => GenConfig::task2(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    /// Documents generated in total (train + test).
    pub docs: usize,
    pub test_size: usize,
    pub split_seed: u64,
    pub gen: GenConfig,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            docs: 1200,
            test_size: 200,
            split_seed: 0,
            gen: GenConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    /// Hidden size; chosen to match the network's parameter count when unset.
    pub hidden: Option<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            hidden: None,
            epochs: 30,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub min_f1: Option<f64>,
    pub max_wlar: Option<f64>,
    /// Fail unless the network's F1 exceeds the baseline's.
    pub beat_baseline: bool,
    /// Paired λ values of the ablation.
    pub ablation_lambdas: Vec<f64>,
    /// F1 both ablation arms must reach before their wlar is compared.
    pub ablation_f1: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            min_f1: None,
            max_wlar: None,
            beat_baseline: false,
            ablation_lambdas: vec![0.0, 0.1],
            ablation_f1: 0.85,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub corpus: CorpusSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub baseline: BaselineSection,
    pub experiment: ExperimentSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    /// Resolved config as embedded into artifacts.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes to JSON")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.corpus.gen.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.corpus.test_size >= self.corpus.docs {
            return Err(ConfigError::Invalid(format!(
                "corpus.test_size {} must be smaller than corpus.docs {}",
                self.corpus.test_size, self.corpus.docs
            )));
        }
        let m = &self.model;
        if [m.embed_dim, m.word_hidden, m.sentence_hidden, m.controller_hidden].contains(&0) {
            return Err(ConfigError::Invalid("model dimensions must be positive".into()));
        }
        if self.baseline.hidden == Some(0) {
            return Err(ConfigError::Invalid("baseline.hidden must be positive".into()));
        }
        Ok(())
    }

    /// Replaces the generator settings with a preset, keeping its seed.
    pub fn apply_preset(&mut self, preset: Preset) {
        self.corpus.gen = preset.gen(self.corpus.gen.seed);
    }

    /// Overrides one dotted key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let mut root = toml::Value::try_from(&*self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let parts: Vec<&str> = key.split('.').collect();
        let (last, parents) = parts.split_last().ok_or_else(|| ConfigError::UnknownKey(key.into()))?;
        let mut table = root.as_table_mut().expect("config root is a table");
        for p in parents {
            table = table
                .get_mut(*p)
                .and_then(toml::Value::as_table_mut)
                .ok_or_else(|| ConfigError::UnknownKey(key.into()))?;
        }
        if value == "none" {
            table.remove(*last);
        } else {
            table.insert(last.to_string(), parse_literal(value));
        }
        let cfg: RunConfig = root.try_into().map_err(|e: toml::de::Error| {
            let message = e.to_string();
            if message.contains("unknown field") {
                ConfigError::UnknownKey(key.into())
            } else {
                ConfigError::Value {
                    key: key.into(),
                    message: message.trim().to_string(),
                }
            }
        })?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }
}

fn parse_literal(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::RewardVariant;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(RunConfig::from_toml_str("").unwrap(), cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = RunConfig::from_toml_str("[train]\nlambda = 0.0\n[corpus.gen]\ndensity = 0.1\n").unwrap();
        assert_eq!(cfg.train.lambda, 0.0);
        assert_eq!(cfg.train.epochs, 30);
        assert_eq!(cfg.corpus.gen.density, 0.1);
        assert_eq!(cfg.corpus.gen.vocab_size, 400);
    }

    #[test]
    fn set_overrides_and_types() {
        let mut cfg = RunConfig::default();
        cfg.set("train.lambda", "0.25").unwrap();
        cfg.set("train.reward", "loss_scaled").unwrap();
        cfg.set("train.reward_baseline", "0.9").unwrap();
        cfg.set("corpus.gen.words_per_sentence", "[4, 8]").unwrap();
        cfg.set("model.cell", "tanh").unwrap();
        assert_eq!(cfg.train.lambda, 0.25);
        assert_eq!(cfg.train.reward, RewardVariant::LossScaled);
        assert_eq!(cfg.train.reward_baseline, Some(0.9));
        assert_eq!(cfg.corpus.gen.words_per_sentence, (4, 8));
        cfg.set("train.reward_baseline", "none").unwrap();
        assert_eq!(cfg.train.reward_baseline, None);
    }

    #[test]
    fn set_rejects_unknown_and_invalid() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.set("train.lamda", "1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(cfg.set("nope.x", "1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(cfg.set("train.epochs", "many"), Err(ConfigError::Value { .. })));
        assert!(matches!(cfg.set("train.lambda", "-1"), Err(ConfigError::Invalid(_))));
        assert_eq!(cfg, RunConfig::default());
        assert!(RunConfig::from_toml_str("[train]\nbogus = 1\n").is_err());
    }

    #[test]
    fn preset_keeps_seed() {
        let mut cfg = RunConfig::default();
        cfg.set("corpus.gen.seed", "17").unwrap();
        cfg.apply_preset(Preset::Task2);
        assert_eq!(cfg.corpus.gen, GenConfig::task2(17));
    }
}
