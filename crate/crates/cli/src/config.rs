use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use was_core::attention::ScaleDim;
use was_core::encoder::{CorpusConfig, EncoderConfig, TrainConfig};

use crate::error::CliError;

/// Everything a run depends on besides the seed. Read from a JSON file; keys
/// left out take their defaults and unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub encoder: EncoderConfig,
    pub training: TrainConfig,
    pub corpus: CorpusConfig,
}

impl RunConfig {
    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
    }

    /// Applies command-line overrides. A gamma override also enables
    /// suppression.
    pub fn apply(&mut self, gamma: Option<f64>, updates: Option<usize>, scale_dim: Option<ScaleDim>) {
        if let Some(g) = gamma {
            self.encoder.was.gamma = g;
            self.encoder.was.enabled = true;
        }
        if let Some(u) = updates {
            self.training.updates = u;
        }
        if let Some(s) = scale_dim {
            self.encoder.scale_dim = s;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.encoder.validate()?;
        self.training.validate()?;
        self.corpus.validate()?;
        if self.corpus.feature_dim != self.encoder.input_dim {
            return Err(CliError::invalid(format!(
                "corpus.feature_dim {} differs from encoder.input_dim {}",
                self.corpus.feature_dim, self.encoder.input_dim
            )));
        }
        if self.corpus.classes != self.encoder.output_classes {
            return Err(CliError::invalid(format!(
                "corpus.classes {} differs from encoder.output_classes {}",
                self.corpus.classes, self.encoder.output_classes
            )));
        }
        if self.corpus.min_frames < self.encoder.frontend_stride {
            return Err(CliError::invalid(format!(
                "corpus.min_frames {} is shorter than the frontend stride {}",
                self.corpus.min_frames, self.encoder.frontend_stride
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_consistent() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"training": {"updates": 5}}"#).unwrap();
        assert_eq!(cfg.training.updates, 5);
        assert_eq!(cfg.encoder, EncoderConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"encoder": {"layers": 3}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"optimiser": {}}"#).is_err());
    }

    #[test]
    fn mismatched_dimensions_are_invalid() {
        let mut cfg = RunConfig::default();
        cfg.corpus.feature_dim = 3;
        assert!(matches!(cfg.validate(), Err(CliError::Invalid(_))));
    }

    #[test]
    fn gamma_override_enables_suppression() {
        let mut cfg = RunConfig::default();
        cfg.encoder.was.enabled = false;
        cfg.apply(Some(0.25), Some(3), Some(ScaleDim::Model));
        assert!(cfg.encoder.was.enabled);
        assert_eq!(cfg.encoder.was.gamma, 0.25);
        assert_eq!(cfg.training.updates, 3);
        assert_eq!(cfg.encoder.scale_dim, ScaleDim::Model);
    }
}
