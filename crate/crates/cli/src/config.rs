//! Run configuration, read from a TOML file and then overridden by flags.

use std::path::{Path, PathBuf};

use clad_core::cost::CostParams;
use clad_core::data::SyntheticConfig;
use clad_core::pipeline::{CostRecipe, ModelParams};
use clad_core::tuning::SearchSpace;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads for sweeps; 0 means one per processor.
    pub threads: usize,
    /// Where commands put their outputs when no explicit path is given.
    pub output_dir: Option<PathBuf>,
    pub data: DataPaths,
    pub cost: CostParams,
    pub recipe: CostRecipe,
    pub folds: FoldConfig,
    pub search: Option<SearchSpace>,
    pub model: Option<ModelParams>,
    pub synthetic: SyntheticConfig,
    pub serve: ServeConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    /// Labelled cases for training and sweeps.
    pub train: Option<PathBuf>,
    /// Labelled cases for evaluation.
    pub test: Option<PathBuf>,
    /// Cases the service can put in front of the committee.
    pub cases: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldConfig {
    pub k: usize,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for FoldConfig {
    fn default() -> Self {
        FoldConfig {
            k: 5,
            stratified: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub addr: String,
    pub data_dir: PathBuf,
    pub token: Option<String>,
    pub blind_default: bool,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            addr: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("clad-data"),
            token: None,
            blind_default: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))
    }

    /// `name` inside the output directory, or `name` itself without one.
    pub fn output_path(&self, name: &str) -> PathBuf {
        match &self.output_dir {
            Some(dir) => dir.join(name),
            None => PathBuf::from(name),
        }
    }
}
