use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use swinct_tensor::{no_grad, Tensor};

use crate::error::Result;
use crate::heads::{Head, HeadConfig};
use crate::params::ParamStore;
use crate::swin::{Backbone, SwinConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: SwinConfig,
    pub head: HeadConfig,
}

/// Backbone plus task head, with all parameters in one store.
#[derive(Debug, Clone)]
pub struct SwinModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub backbone: Backbone,
    pub head: Head,
}

impl SwinModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        let backbone = Backbone::new(&mut params, &config.backbone, seed)?;
        let head = Head::new(&mut params, &config.backbone, &config.head, seed.wrapping_add(1))?;
        Ok(Self { config, params, backbone, head })
    }

    /// Logits for `[B, H, W, 3]` images: `[B, classes]` or `[B, H, W, classes]`.
    /// Stochastic depth is active only when `rng` is given.
    pub fn forward(&self, images: &Tensor, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let features = self.backbone.forward(&self.params, images, rng)?;
        self.head.forward(&self.params, &features)
    }

    /// Class probabilities along the last axis, without recording a graph.
    pub fn predict(&self, images: &Tensor) -> Result<Tensor> {
        no_grad(|| {
            let logits = self.forward(images, None)?;
            Ok(logits.softmax(logits.rank() - 1)?)
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }
}

impl SwinModel {
    /// Sets the maximum stochastic-depth rate and respreads the per-block
    /// rates linearly.
    pub fn set_drop_path(&mut self, rate: f64) -> Result<()> {
        let mut cfg = self.config.backbone.clone();
        cfg.drop_path_rate = rate;
        cfg.validate()?;
        let rates = cfg.drop_path_rates();
        let blocks = self.backbone.stages.iter_mut().flat_map(|s| s.blocks.iter_mut());
        for (block, r) in blocks.zip(rates) {
            block.drop_path = r;
        }
        self.backbone.config = cfg.clone();
        self.config.backbone = cfg;
        Ok(())
    }
}
