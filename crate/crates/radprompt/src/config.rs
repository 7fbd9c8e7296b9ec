//! Run configuration loaded from a JSON file via `--config`, with CLI
//! overrides applied on top.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::radiomics::ExtractConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub extract: ExtractConfig,
    /// Encoder geometry for the synthetic / embedding pipeline.
    pub encoder: EncoderConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub token_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub n_classes: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            token_dim: 16,
            hidden_dim: 32,
            embed_dim: 16,
            n_classes: 3,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        crate::volume::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::volume::write_json(path, self)
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> RunConfig {
        if let Some(s) = seed {
            self.train.seed = s;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_and_accepts_partial_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        let config = RunConfig::default();
        config.save(&path).unwrap();
        let loaded = RunConfig::load(&path).unwrap();
        assert_eq!(loaded.train.epochs, config.train.epochs);

        std::fs::write(&path, r#"{"train": {"epochs": 7}}"#).unwrap();
        let partial = RunConfig::load(&path).unwrap();
        assert_eq!(partial.train.epochs, 7);
        assert_eq!(partial.train.folds, TrainConfig::default().folds);
    }

    #[test]
    fn seed_override() {
        let config = RunConfig::default().with_seed(Some(42));
        assert_eq!(config.train.seed, 42);
        let untouched = RunConfig::default().with_seed(None);
        assert_eq!(untouched.train.seed, TrainConfig::default().seed);
    }
}
