//! JSON config files with strict schemas: unknown keys are rejected so a
//! typo cannot silently fall back to a default.

use std::fs;
use std::path::Path;

use gapnet_core::data::GeneratorConfig;
use gapnet_core::model::ModelConfig;
use gapnet_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CmdError;

/// Model + training sections for the `train`/`ablate`/`grad-check`
/// commands. Both sections fall back to desk-scale defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))
}

pub fn load_generator_config(path: &Path) -> Result<GeneratorConfig, CmdError> {
    let cfg: GeneratorConfig = parse(path)?;
    cfg.validate().map_err(CmdError::data)?;
    Ok(cfg)
}

pub fn load_experiment_config(path: Option<&Path>) -> Result<ExperimentConfig, CmdError> {
    let cfg = match path {
        Some(p) => parse::<ExperimentConfig>(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.model.validate().map_err(CmdError::data)?;
    cfg.train.validate().map_err(CmdError::data)?;
    Ok(cfg)
}

/// Model vocab sizes must cover the generator's id spaces; derive a model
/// config from a generator config for convenience.
pub fn model_for_generator(base: &ModelConfig, gen: &GeneratorConfig) -> ModelConfig {
    ModelConfig {
        n_users: gen.n_users,
        n_items: gen.n_items,
        n_contexts: gen.n_contexts,
        ..base.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.json");
        fs::write(&path, r#"{"n_users": 10, "n_userz": 3}"#).unwrap();
        let err = load_generator_config(&path).unwrap_err().to_string();
        assert!(err.contains("unknown field"), "{err}");
        assert!(err.contains("n_userz"), "{err}");
    }

    #[test]
    fn partial_config_takes_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.json");
        fs::write(&path, r#"{"n_users": 77, "noise_rate": 0.5}"#).unwrap();
        let cfg = load_generator_config(&path).unwrap();
        assert_eq!(cfg.n_users, 77);
        assert_eq!(cfg.noise_rate, 0.5);
        assert_eq!(cfg.n_items, GeneratorConfig::default().n_items);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.json");
        fs::write(&path, r#"{"noise_rate": 1.5}"#).unwrap();
        let err = load_generator_config(&path).unwrap_err().to_string();
        assert!(err.contains("noise_rate"), "{err}");
    }

    #[test]
    fn experiment_config_sections_are_optional() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        fs::write(&path, r#"{"train": {"max_epochs": 3}}"#).unwrap();
        let cfg = load_experiment_config(Some(&path)).unwrap();
        assert_eq!(cfg.train.max_epochs, 3);
        assert_eq!(cfg.model.d, ModelConfig::default().d);
    }
}
