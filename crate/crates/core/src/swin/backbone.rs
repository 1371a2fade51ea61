use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swinct_tensor::Tensor;

use super::block::SwinBlock;
use super::config::SwinConfig;
use super::window::dims4;
use crate::error::{CoreError, Result};
use crate::params::{LayerNorm, Linear, ParamStore};

/// Splits the image into `p × p` patches, projects each flattened patch to
/// `C` channels and normalizes.
#[derive(Debug, Clone)]
pub struct PatchEmbed {
    pub proj: Linear,
    pub norm: LayerNorm,
    pub patch: usize,
    pub in_channels: usize,
}

impl PatchEmbed {
    pub fn new(ps: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, cfg: &SwinConfig) -> Self {
        let patch_len = cfg.patch_size * cfg.patch_size * cfg.in_channels;
        Self {
            proj: Linear::new(ps, rng, &format!("{prefix}.proj"), patch_len, cfg.embed_dim, true),
            norm: LayerNorm::new(ps, &format!("{prefix}.norm"), cfg.embed_dim),
            patch: cfg.patch_size,
            in_channels: cfg.in_channels,
        }
    }

    /// `[B, H, W, c]` to `[B, H/p, W/p, p·p·c]`, each patch flattened in
    /// (row, column, channel) order.
    pub fn patchify(&self, image: &Tensor) -> Result<Tensor> {
        let [b, h, w, c] = dims4(image, "patch_embed")?;
        let p = self.patch;
        if h % p != 0 || w % p != 0 || c != self.in_channels {
            return Err(CoreError::config(format!(
                "image {h}x{w}x{c} does not split into {p}x{p}x{} patches",
                self.in_channels
            )));
        }
        let t = image.reshape(&[b, h / p, p, w / p, p, c])?.permute(&[0, 1, 3, 2, 4, 5])?;
        Ok(t.reshape(&[b, h / p, w / p, p * p * c])?)
    }

    /// Projected patches before the norm.
    pub fn project(&self, ps: &ParamStore, image: &Tensor) -> Result<Tensor> {
        self.proj.forward(ps, &self.patchify(image)?)
    }

    pub fn forward(&self, ps: &ParamStore, image: &Tensor) -> Result<Tensor> {
        self.norm.forward(ps, &self.project(ps, image)?)
    }
}

/// Concatenates each 2×2 token neighbourhood (top-left, bottom-left,
/// top-right, bottom-right), normalizes, and reduces `4D → 2D`.
#[derive(Debug, Clone)]
pub struct PatchMerge {
    pub norm: LayerNorm,
    pub reduction: Linear,
}

impl PatchMerge {
    pub fn new(ps: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, dim: usize) -> Self {
        Self {
            norm: LayerNorm::new(ps, &format!("{prefix}.norm"), 4 * dim),
            reduction: Linear::new(ps, rng, &format!("{prefix}.reduction"), 4 * dim, 2 * dim, false),
        }
    }

    /// `[B, h, w, D]` to `[B, h/2, w/2, 4D]`.
    pub fn gather(x: &Tensor) -> Result<Tensor> {
        let [b, h, w, d] = dims4(x, "patch_merge")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(CoreError::config(format!("patch merge needs an even grid, got {h}x{w}")));
        }
        let t = x.reshape(&[b, h / 2, 2, w / 2, 2, d])?.permute(&[0, 1, 3, 4, 2, 5])?;
        Ok(t.reshape(&[b, h / 2, w / 2, 4 * d])?)
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> Result<Tensor> {
        self.reduction.forward(ps, &self.norm.forward(ps, &Self::gather(x)?)?)
    }
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub downsample: Option<PatchMerge>,
    pub blocks: Vec<SwinBlock>,
}

impl Stage {
    pub fn forward(&self, ps: &ParamStore, x: &Tensor, mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let mut x = match &self.downsample {
            Some(merge) => merge.forward(ps, x)?,
            None => x.clone(),
        };
        for block in &self.blocks {
            x = block.forward(ps, &x, rng.as_deref_mut())?;
        }
        Ok(x)
    }
}

/// Patch embedding followed by four stages; stages 1–3 start with a patch
/// merge. Blocks alternate between regular and shifted windows.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub config: SwinConfig,
    pub patch_embed: PatchEmbed,
    pub stages: Vec<Stage>,
}

impl Backbone {
    pub fn new(ps: &mut ParamStore, cfg: &SwinConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let patch_embed = PatchEmbed::new(ps, &mut rng, "patch_embed", cfg);
        let rates = cfg.drop_path_rates();
        let mut block_idx = 0;
        let mut stages = Vec::with_capacity(4);
        for i in 0..4 {
            let downsample = (i > 0).then(|| {
                PatchMerge::new(ps, &mut rng, &format!("stages.{i}.downsample"), cfg.stage_dim(i - 1))
            });
            let geometry = cfg.stage_geometry(i);
            let mut blocks = Vec::with_capacity(cfg.depths[i]);
            for j in 0..cfg.depths[i] {
                blocks.push(SwinBlock::new(
                    ps,
                    &mut rng,
                    &format!("stages.{i}.blocks.{j}"),
                    cfg.stage_dim(i),
                    cfg.num_heads[i],
                    cfg.mlp_ratio,
                    geometry,
                    j % 2 == 1,
                    rates[block_idx],
                )?);
                block_idx += 1;
            }
            stages.push(Stage { downsample, blocks });
        }
        Ok(Self { config: cfg.clone(), patch_embed, stages })
    }

    /// Features after each stage, `[B, r_i, r_i, C·2^i]`.
    pub fn forward(&self, ps: &ParamStore, image: &Tensor, mut rng: Option<&mut ChaCha8Rng>) -> Result<Vec<Tensor>> {
        let [_, h, w, c] = dims4(image, "backbone")?;
        let cfg = &self.config;
        if h != cfg.img_size || w != cfg.img_size || c != cfg.in_channels {
            return Err(CoreError::config(format!(
                "backbone expects {0}x{0}x{1} images, got {h}x{w}x{c}",
                cfg.img_size, cfg.in_channels
            )));
        }
        let mut x = self.patch_embed.forward(ps, image)?;
        let mut features = Vec::with_capacity(4);
        for stage in &self.stages {
            x = stage.forward(ps, &x, rng.as_deref_mut())?;
            features.push(x.clone());
        }
        Ok(features)
    }
}
