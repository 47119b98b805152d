use std::path::{Path, PathBuf};

use facefill::scargen::DatasetConfig;
use facefill::training::{Architecture, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionConfig {
    pub k_sigma: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            k_sigma: facefill::filling::DEFAULT_K_SIGMA,
        }
    }
}

/// Input and output locations. Relative paths in a config file are taken
/// relative to the working directory, like flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub data_dir: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// Everything a run needs, as one JSON document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub architecture: Architecture,
    pub training: TrainConfig,
    pub extraction: ExtractionConfig,
    pub paths: PathsConfig,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let bytes = std::fs::read(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Failure::usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Checks every section, so that no work starts on a bad config.
    pub fn validate(&self) -> Result<(), Failure> {
        self.dataset.validate().map_err(Failure::usage)?;
        self.architecture.validate().map_err(Failure::usage)?;
        self.training.adam.validate().map_err(Failure::usage)?;
        if self.training.batch_size == 0 {
            return Err(Failure::usage("batch_size must be at least 1"));
        }
        if self.training.epochs == 0 {
            return Err(Failure::usage("epochs must be at least 1"));
        }
        let k = self.extraction.k_sigma;
        if !(k.is_finite() && k >= 0.0) {
            return Err(Failure::usage(format!(
                "k_sigma must be finite and >= 0, got {k}"
            )));
        }
        if self.threads == Some(0) {
            return Err(Failure::usage("threads must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c: RunConfig =
            serde_json::from_str(r#"{"dataset":{"count":3},"training":{"batch_size":2}}"#).unwrap();
        assert_eq!(c.dataset.count, 3);
        assert_eq!(
            c.dataset.scars_per_mesh,
            DatasetConfig::default().scars_per_mesh
        );
        assert_eq!(c.training.batch_size, 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"datset":{}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"dataset":{"cnt":1}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"architecture":{"depth":3}}"#).is_err());
    }

    #[test]
    fn bad_values_fail_validation() {
        let mut c = RunConfig::default();
        c.extraction.k_sigma = -1.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.architecture.widths = vec![4, 8, 8, 8];
        assert!(c.validate().is_err());
    }
}
