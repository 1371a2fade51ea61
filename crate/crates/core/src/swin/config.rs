use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Architectural hyperparameters of a four-stage Swin backbone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwinConfig {
    pub variant: String,
    pub img_size: usize,
    #[serde(default = "default_patch")]
    pub patch_size: usize,
    #[serde(default = "default_in_channels")]
    pub in_channels: usize,
    pub embed_dim: usize,
    pub depths: [usize; 4],
    pub num_heads: [usize; 4],
    #[serde(default = "default_window")]
    pub window_size: usize,
    #[serde(default = "default_mlp_ratio")]
    pub mlp_ratio: usize,
    #[serde(default)]
    pub drop_path_rate: f64,
}

fn default_patch() -> usize {
    4
}
fn default_in_channels() -> usize {
    3
}
fn default_window() -> usize {
    7
}
fn default_mlp_ratio() -> usize {
    4
}

/// Spatial layout of one stage: its token grid, the effective window and
/// shift, and the grid padded up to whole windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageGeometry {
    pub h: usize,
    pub w: usize,
    pub window: usize,
    pub shift: usize,
    pub padded_h: usize,
    pub padded_w: usize,
}

impl StageGeometry {
    /// A grid no larger than the window in some direction uses one unshifted
    /// window of that size; otherwise the grid is padded to whole windows.
    pub fn new(h: usize, w: usize, window_size: usize) -> Self {
        let (window, shift) = if h.min(w) <= window_size {
            (h.min(w), 0)
        } else {
            (window_size, window_size / 2)
        };
        Self {
            h,
            w,
            window,
            shift,
            padded_h: h.div_ceil(window) * window,
            padded_w: w.div_ceil(window) * window,
        }
    }

    pub fn is_padded(&self) -> bool {
        self.padded_h != self.h || self.padded_w != self.w
    }

    pub fn num_windows(&self) -> usize {
        (self.padded_h / self.window) * (self.padded_w / self.window)
    }

    pub fn tokens_per_window(&self) -> usize {
        self.window * self.window
    }
}

impl SwinConfig {
    pub fn swin_t() -> Self {
        Self::named("swin-t", 224, 96, [2, 2, 6, 2], [3, 6, 12, 24], 7)
    }

    pub fn swin_s() -> Self {
        Self::named("swin-s", 224, 96, [2, 2, 18, 2], [3, 6, 12, 24], 7)
    }

    pub fn swin_b() -> Self {
        Self::named("swin-b", 224, 128, [2, 2, 18, 2], [4, 8, 16, 32], 7)
    }

    /// Swin-B at 384² with 12-token windows, so every stage tiles exactly.
    pub fn swin_b_384() -> Self {
        Self::named("swin-b", 384, 128, [2, 2, 18, 2], [4, 8, 16, 32], 12)
    }

    /// Small model for desk-scale runs on 64² slices.
    pub fn toy() -> Self {
        Self::named("toy", 64, 32, [2, 2, 2, 2], [1, 2, 4, 8], 4)
    }

    /// Looks up a named variant. `resolution` picks the 384² Swin-B layout.
    pub fn variant(name: &str, resolution: usize) -> Result<Self> {
        let mut cfg = match (name, resolution) {
            ("swin-b", 384) => Self::swin_b_384(),
            ("swin-t", _) => Self::swin_t(),
            ("swin-s", _) => Self::swin_s(),
            ("swin-b", _) => Self::swin_b(),
            ("toy", _) => Self::toy(),
            _ => return Err(CoreError::config(format!("unknown variant `{name}`"))),
        };
        cfg.img_size = resolution;
        cfg.validate()?;
        Ok(cfg)
    }

    fn named(
        variant: &str,
        img_size: usize,
        embed_dim: usize,
        depths: [usize; 4],
        num_heads: [usize; 4],
        window_size: usize,
    ) -> Self {
        Self {
            variant: variant.to_string(),
            img_size,
            patch_size: 4,
            in_channels: 3,
            embed_dim,
            depths,
            num_heads,
            window_size,
            mlp_ratio: 4,
            drop_path_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::Config(msg));
        if self.patch_size == 0 || self.img_size == 0 || !self.img_size.is_multiple_of(self.patch_size) {
            return bad(format!(
                "img_size {} is not a positive multiple of patch_size {}",
                self.img_size, self.patch_size
            ));
        }
        let grid = self.img_size / self.patch_size;
        if !grid.is_multiple_of(8) {
            return bad(format!("token grid {grid} must be divisible by 8 for three patch merges"));
        }
        if self.window_size == 0 {
            return bad("window_size must be at least 1".into());
        }
        if self.in_channels == 0 || self.embed_dim == 0 || self.mlp_ratio == 0 {
            return bad("in_channels, embed_dim and mlp_ratio must be positive".into());
        }
        if !(0.0..1.0).contains(&self.drop_path_rate) {
            return bad(format!("drop_path_rate {} outside [0, 1)", self.drop_path_rate));
        }
        for i in 0..4 {
            if !self.depths[i].is_multiple_of(2) {
                return bad(format!("depth of stage {i} is {}, must be even", self.depths[i]));
            }
            let dim = self.stage_dim(i);
            if self.num_heads[i] == 0 || !dim.is_multiple_of(self.num_heads[i]) {
                return bad(format!(
                    "stage {i} dimension {dim} is not divisible by {} heads",
                    self.num_heads[i]
                ));
            }
        }
        Ok(())
    }

    pub fn stage_dim(&self, stage: usize) -> usize {
        self.embed_dim << stage
    }

    pub fn stage_resolution(&self, stage: usize) -> usize {
        (self.img_size / self.patch_size) >> stage
    }

    pub fn stage_geometry(&self, stage: usize) -> StageGeometry {
        let r = self.stage_resolution(stage);
        StageGeometry::new(r, r, self.window_size)
    }

    pub fn total_depth(&self) -> usize {
        self.depths.iter().sum()
    }

    /// Stochastic-depth rate of every block, rising linearly from zero at the
    /// first block to `drop_path_rate` at the last.
    pub fn drop_path_rates(&self) -> Vec<f64> {
        let n = self.total_depth();
        (0..n)
            .map(|i| if n > 1 { self.drop_path_rate * i as f64 / (n - 1) as f64 } else { 0.0 })
            .collect()
    }

    pub fn final_dim(&self) -> usize {
        self.stage_dim(3)
    }
}

/// `⌊window_size / 2⌋`, the cyclic shift used by shifted-window blocks.
pub fn shift_size(window_size: usize) -> Result<usize> {
    if window_size < 1 {
        return Err(CoreError::config("window_size must be at least 1"));
    }
    Ok(window_size / 2)
}
