use rand_chacha::ChaCha8Rng;
use swinct_tensor::Tensor;

use super::attention::{expand_mask, WindowAttention};
use super::config::StageGeometry;
use super::window::{build_padded_mask, dims4, window_partition, window_reverse};
use crate::error::{CoreError, Result};
use crate::params::{drop_path, LayerNorm, Linear, ParamStore};

#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new(ps: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, dim: usize, hidden: usize) -> Self {
        Self {
            fc1: Linear::new(ps, rng, &format!("{prefix}.fc1"), dim, hidden, true),
            fc2: Linear::new(ps, rng, &format!("{prefix}.fc2"), hidden, dim, true),
        }
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(ps, &self.fc1.forward(ps, x)?.gelu())
    }
}

/// One transformer block: windowed attention then MLP, each pre-normed and
/// residual. A nonzero `shift` makes it the shifted-window variant.
#[derive(Debug, Clone)]
pub struct SwinBlock {
    pub norm1: LayerNorm,
    pub attn: WindowAttention,
    pub norm2: LayerNorm,
    pub mlp: Mlp,
    pub geometry: StageGeometry,
    pub shift: usize,
    pub drop_path: f64,
    /// `[nW, heads, M², M²]`, present when shifting or padding.
    mask: Option<Tensor>,
}

impl SwinBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        dim: usize,
        heads: usize,
        mlp_ratio: usize,
        geometry: StageGeometry,
        shifted: bool,
        drop_path: f64,
    ) -> Result<Self> {
        let shift = if shifted { geometry.shift } else { 0 };
        let mask = if shift > 0 || geometry.is_padded() {
            let m = build_padded_mask(
                geometry.padded_h,
                geometry.padded_w,
                geometry.h,
                geometry.w,
                geometry.window,
                shift,
            )?;
            Some(expand_mask(&m, heads)?)
        } else {
            None
        };
        Ok(Self {
            norm1: LayerNorm::new(ps, &format!("{prefix}.norm1"), dim),
            attn: WindowAttention::new(ps, rng, &format!("{prefix}.attn"), dim, heads, geometry.window)?,
            norm2: LayerNorm::new(ps, &format!("{prefix}.norm2"), dim),
            mlp: Mlp::new(ps, rng, &format!("{prefix}.mlp"), dim, dim * mlp_ratio),
            geometry,
            shift,
            drop_path,
            mask,
        })
    }

    pub fn mask(&self) -> Option<&Tensor> {
        self.mask.as_ref()
    }

    /// Windowed attention branch on an already normalized `[B, h, w, C]` grid:
    /// pad, roll by `−s`, attend per window, roll back and unpad.
    pub fn attention_branch(&self, ps: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let g = &self.geometry;
        let s = self.shift as isize;
        let mut y = x.clone();
        if g.is_padded() {
            y = y.pad_zeros(1, 0, g.padded_h - g.h)?.pad_zeros(2, 0, g.padded_w - g.w)?;
        }
        if s > 0 {
            y = y.roll(1, -s)?.roll(2, -s)?;
        }
        let windows = window_partition(&y, g.window)?;
        let attended = self.attn.forward(ps, &windows, self.mask.as_ref())?;
        let mut y = window_reverse(&attended, g.padded_h, g.padded_w, g.window)?;
        if s > 0 {
            y = y.roll(1, s)?.roll(2, s)?;
        }
        if g.is_padded() {
            y = y.narrow(1, 0, g.h)?.narrow(2, 0, g.w)?;
        }
        Ok(y)
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor, mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let [_, h, w, _] = dims4(x, "swin block")?;
        if (h, w) != (self.geometry.h, self.geometry.w) {
            return Err(CoreError::config(format!(
                "block built for a {}x{} grid, got {h}x{w}",
                self.geometry.h, self.geometry.w
            )));
        }
        let attn = self.attention_branch(ps, &self.norm1.forward(ps, x)?)?;
        let x = x.add(&drop_path(&attn, self.drop_path, rng.as_deref_mut())?)?;
        let mlp = self.mlp.forward(ps, &self.norm2.forward(ps, &x)?)?;
        Ok(x.add(&drop_path(&mlp, self.drop_path, rng)?)?)
    }
}
