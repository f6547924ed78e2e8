//! Config file shared by every subcommand. Sections mirror the library
//! config types; any key may be overridden by the flag of the same name
//! (`train.seed` is `--train-seed`, to keep it apart from generator seeds).

use std::path::{Path, PathBuf};

use evjrs_core::learner::TrainConfig;
use evjrs_core::solver::SolveConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_text;
use crate::pipeline::{ExperimentConfig, ModelWidths};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "EVJRS_CONFIG";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub solve: SolveConfig,
    pub train: TrainConfig,
    pub model: ModelWidths,
    pub experiment: ExperimentConfig,
}

pub fn parse_config(path: &Path, text: &str) -> Result<FileConfig> {
    toml::from_str(text)
        .map_err(|e| Error::format(path, e.span().map(|s| s.start), e.message().to_string()))
}

/// The file at `path`, or defaults when none is given.
pub fn load_config(path: Option<&PathBuf>) -> Result<FileConfig> {
    match path {
        Some(p) => parse_config(p, &read_text(p)?),
        None => Ok(FileConfig::default()),
    }
}
