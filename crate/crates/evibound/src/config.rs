//! TOML engine configuration: variant, thresholds, retry budget, store root.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{PipelineConfig, SystemVariant};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub variant: Option<String>,
    pub tau: Option<f64>,
    pub hard_veto_threshold: Option<f64>,
    pub max_retries_per_phase: Option<u32>,
    #[serde(default)]
    pub store: StoreSection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreSection {
    pub root: Option<String>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl EngineConfig {
    pub fn parse(text: &str) -> Result<EngineConfig, ConfigError> {
        let config: EngineConfig =
            toml::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        if let Some(tau) = config.tau {
            if !(0.0..=1.0).contains(&tau) {
                return Err(ConfigError::Invalid(format!("tau {tau} not in [0, 1]")));
            }
        }
        if let Some(v) = config.hard_veto_threshold {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::Invalid(format!(
                    "hard_veto_threshold {v} not in [0, 1]"
                )));
            }
        }
        if let Some(name) = &config.variant {
            if SystemVariant::parse(name).is_none() {
                return Err(ConfigError::Invalid(format!("unknown variant {name:?}")));
            }
        }
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<EngineConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Malformed(format!("{}: {e}", path.display())))?;
        EngineConfig::parse(&text)
    }

    pub fn variant(&self) -> Option<SystemVariant> {
        self.variant.as_deref().and_then(SystemVariant::parse)
    }

    /// Overlay the configured thresholds onto a pipeline config. `tau` also
    /// drives patch application, so both thresholds move together.
    pub fn apply(&self, pipeline: &mut PipelineConfig) {
        if let Some(tau) = self.tau {
            pipeline.tau = tau;
            pipeline.patch_tau = tau;
        }
        if let Some(v) = self.hard_veto_threshold {
            pipeline.hard_veto_threshold = v;
        }
        if let Some(n) = self.max_retries_per_phase {
            pipeline.max_retries_per_phase = n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_parses_and_applies() {
        let c = EngineConfig::parse(
            "variant = \"evibound\"\ntau = 0.8\nhard_veto_threshold = 0.4\nmax_retries_per_phase = 3\n\n[store]\nroot = \"/tmp/evistore\"\n",
        )
        .unwrap();
        assert_eq!(c.variant(), Some(SystemVariant::evibound()));
        assert_eq!(c.store.root.as_deref(), Some("/tmp/evistore"));
        let mut p = PipelineConfig::default();
        c.apply(&mut p);
        assert_eq!(p.tau, 0.8);
        assert_eq!(p.patch_tau, 0.8);
        assert_eq!(p.hard_veto_threshold, 0.4);
        assert_eq!(p.max_retries_per_phase, 3);
    }

    #[test]
    fn empty_config_is_valid_and_changes_nothing() {
        let c = EngineConfig::parse("").unwrap();
        let mut p = PipelineConfig::default();
        c.apply(&mut p);
        assert_eq!(p.tau, 0.7);
        assert_eq!(p.max_retries_per_phase, 2);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(EngineConfig::parse("tau = 1.5").is_err());
        assert!(EngineConfig::parse("variant = \"C\"").is_err());
        assert!(EngineConfig::parse("not toml [").is_err());
        assert!(EngineConfig::parse("unknown_key = 1").is_err());
    }
}
