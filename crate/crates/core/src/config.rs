//! TOML run configuration. Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::FitConfig;
use crate::io::DatasetSpec;
use crate::montecarlo::ExperimentSpec;
use crate::select::{Criterion, SelectionConfig};
use crate::simulate::DgpSpec;

/// Ranks and lag for `fit`, plus the criterion `select` reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub r1: Option<usize>,
    pub r2: Option<usize>,
    #[serde(default = "one")]
    pub p: usize,
    #[serde(default = "bic")]
    pub criterion: Criterion,
}

fn one() -> usize {
    1
}

fn bic() -> Criterion {
    Criterion::Bic
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { r1: None, r2: None, p: 1, criterion: Criterion::Bic }
    }
}

/// Every section is optional; command-line flags override these values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub data: Option<DatasetSpec>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub fit: FitConfig,
    pub select: Option<SelectionConfig>,
    pub simulate: Option<DgpSpec>,
    pub experiment: Option<ExperimentSpec>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; a relative data path is resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(data), Some(dir)) = (cfg.data.as_mut(), path.parent()) {
            if data.path.is_relative() {
                data.path = dir.join(&data.path);
            }
        }
        Ok(cfg)
    }
}
