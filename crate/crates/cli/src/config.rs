//! The JSON run configuration. Every section is optional; unknown keys are
//! rejected before any work starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use swinct_core::swin::SwinConfig;
use swinct_core::train::Recipe;
use swinct_ct::prepare::PrepareOptions;

use crate::exit::UsageError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub prepare: Option<PrepareConfig>,
    pub model: Option<ModelSection>,
    pub recipe: Option<Recipe>,
    pub train: Option<TrainSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepareConfig {
    pub volumes: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub phantom: Option<PhantomConfig>,
    /// Pipeline settings; phantom sources keep every negative when absent.
    pub options: Option<PrepareOptions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    pub count: usize,
    #[serde(default = "default_phantom_size")]
    pub size: usize,
    #[serde(default = "default_nodule_prob")]
    pub nodule_prob: f64,
}

pub fn default_phantom_size() -> usize {
    64
}

pub fn default_nodule_prob() -> f64 {
    0.5
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Named backbone; ignored when `backbone` is given.
    pub variant: Option<String>,
    pub backbone: Option<SwinConfig>,
    pub decoder_dim: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub data: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub eval_every: Option<u64>,
    pub max_steps: Option<u64>,
    #[serde(default)]
    pub eval_with_ema: bool,
    pub eval_batch_size: Option<usize>,
    #[serde(default)]
    pub curves: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError::new(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| UsageError::new(format!("{}: {}", path.display(), e.0)).into())
    }

    pub fn parse(text: &str) -> Result<Self, UsageError> {
        serde_json::from_str(text).map_err(|e| UsageError::new(format!("invalid config: {e}")))
    }
}
