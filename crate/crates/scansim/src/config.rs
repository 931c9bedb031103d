//! Run configuration: one JSON document nesting every module's settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::CatalogConfig;
use crate::curation::CurationConfig;
use crate::flywheel::FlywheelConfig;
use crate::recognizer::RecognizerModel;
use crate::scanner::DeploymentConfig;
use crate::world::WorldConfig;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Required; there is deliberately no wall-clock fallback.
    pub seed: Option<u64>,
    /// Parent directory for run outputs; `--out` and `SCANSIM_OUT` override.
    pub out_dir: Option<PathBuf>,
    pub catalog: CatalogConfig,
    pub world: WorldConfig,
    pub deployment: DeploymentConfig,
    pub recognizer: RecognizerModel,
    pub curation: CurationConfig,
    pub flywheel: FlywheelConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config field `seed` is missing (pass it in the file or via --seed)")]
    MissingSeed,
    #[error("config invalid: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Validate every nested section; `seed` must be set by now.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seed.is_none() {
            return Err(ConfigError::MissingSeed);
        }
        self.catalog
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.world
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.deployment
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.recognizer
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.curation
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.flywheel
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Content-addressed run id: hash of the materialized config (defaults
    /// included) and the effective seed.
    pub fn run_id(&self) -> String {
        let body = serde_json::to_vec(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(&body);
        h.update(self.seed.unwrap_or(0).to_le_bytes());
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
