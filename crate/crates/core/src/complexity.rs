//! Analytic parameter and FLOP accounting.
//!
//! One multiply-accumulate counts as one FLOP. Norms, softmax, activations,
//! residual additions and resampling are not counted.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::heads::HeadConfig;
use crate::swin::{StageGeometry, SwinConfig};

fn checked(values: &[u64], op: fn(u64, u64) -> Option<u64>, name: &'static str) -> Result<u64> {
    values[1..]
        .iter()
        .try_fold(values[0], |acc, &v| op(acc, v))
        .ok_or(CoreError::Overflow(name))
}

fn mul(values: &[u64], name: &'static str) -> Result<u64> {
    checked(values, u64::checked_mul, name)
}

fn add(values: &[u64], name: &'static str) -> Result<u64> {
    checked(values, u64::checked_add, name)
}

/// Global multi-head self-attention: `4hwC² + 2(hw)²C`.
pub fn flops_msa(h: u64, w: u64, c: u64) -> Result<u64> {
    if h == 0 || w == 0 || c == 0 {
        return Err(CoreError::Usage("flops_msa needs positive arguments".into()));
    }
    let hw = mul(&[h, w], "flops_msa")?;
    let linear = mul(&[4, hw, c, c], "flops_msa")?;
    let quadratic = mul(&[2, hw, hw, c], "flops_msa")?;
    add(&[linear, quadratic], "flops_msa")
}

/// Windowed multi-head self-attention: `4hwC² + 2M²hwC`.
pub fn flops_wmsa(h: u64, w: u64, c: u64, m: u64) -> Result<u64> {
    if h == 0 || w == 0 || c == 0 || m == 0 {
        return Err(CoreError::Usage("flops_wmsa needs positive arguments".into()));
    }
    if !h.is_multiple_of(m) || !w.is_multiple_of(m) {
        return Err(CoreError::Usage(format!("window {m} does not divide {h}x{w}")));
    }
    let hw = mul(&[h, w], "flops_wmsa")?;
    let linear = mul(&[4, hw, c, c], "flops_wmsa")?;
    let windowed = mul(&[2, m, m, hw, c], "flops_wmsa")?;
    add(&[linear, windowed], "flops_wmsa")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityPart {
    pub name: String,
    pub params: u64,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub variant: String,
    pub resolution: usize,
    pub parts: Vec<ComplexityPart>,
    pub params: u64,
    pub flops: u64,
    /// FLOPs of the attention-matrix products (`QKᵀ` and `·V`) alone.
    pub attention_flops: u64,
}

struct Tally {
    parts: Vec<ComplexityPart>,
    attention: u64,
}

impl Tally {
    fn push(&mut self, name: String, params: usize, flops: usize) {
        self.parts.push(ComplexityPart { name, params: params as u64, flops: flops as u64 });
    }
}

/// Exact parameter count and MAC count of the model built from `cfg` with
/// `head` at `resolution`² input.
pub fn count_model(cfg: &SwinConfig, head: &HeadConfig, resolution: usize) -> Result<ComplexityReport> {
    let mut cfg = cfg.clone();
    cfg.img_size = resolution;
    cfg.validate()?;
    head.validate()?;
    let mut t = Tally { parts: Vec::new(), attention: 0 };

    let c = cfg.embed_dim;
    let patch_len = cfg.patch_size * cfg.patch_size * cfg.in_channels;
    let r0 = cfg.stage_resolution(0);
    t.push("patch_embed".into(), patch_len * c + c + 2 * c, r0 * r0 * patch_len * c);

    for i in 0..4 {
        let d = cfg.stage_dim(i);
        let r = cfg.stage_resolution(i);
        if i > 0 {
            let dp = cfg.stage_dim(i - 1);
            t.push(format!("stages.{i}.downsample"), 2 * 4 * dp + 4 * dp * 2 * dp, r * r * 4 * dp * 2 * dp);
        }
        let g = cfg.stage_geometry(i);
        for j in 0..cfg.depths[i] {
            let (params, flops, attn) = block_cost(&g, d, cfg.num_heads[i], cfg.mlp_ratio);
            t.attention += attn as u64;
            t.push(format!("stages.{i}.blocks.{j}"), params, flops);
        }
    }

    match *head {
        HeadConfig::Classifier { num_classes } => {
            let d = cfg.final_dim();
            t.push("head".into(), 2 * d + d * num_classes + num_classes, d * num_classes);
        }
        HeadConfig::Segmentation { num_classes, decoder_dim: dd } => {
            for i in 0..4 {
                let r = cfg.stage_resolution(i);
                let di = cfg.stage_dim(i);
                t.push(format!("decoder.lateral.{i}"), di * dd + dd, r * r * di * dd);
            }
            t.push("decoder.fuse".into(), 9 * dd * dd + dd, r0 * r0 * 9 * dd * dd);
            t.push("decoder.classifier".into(), dd * num_classes + num_classes, r0 * r0 * dd * num_classes);
        }
    }

    let params = add(&t.parts.iter().map(|p| p.params).collect::<Vec<_>>(), "count_model")?;
    let flops = add(&t.parts.iter().map(|p| p.flops).collect::<Vec<_>>(), "count_model")?;
    Ok(ComplexityReport {
        variant: cfg.variant.clone(),
        resolution,
        parts: t.parts,
        params,
        flops,
        attention_flops: t.attention,
    })
}

/// Parameters, total MACs, and attention-matrix MACs of one block.
fn block_cost(g: &StageGeometry, d: usize, heads: usize, mlp_ratio: usize) -> (usize, usize, usize) {
    let hidden = d * mlp_ratio;
    let table = (2 * g.window - 1).pow(2) * heads;
    let params = 2 * d + (3 * d * d + 3 * d) + table + (d * d + d) + 2 * d + (d * hidden + hidden) + (hidden * d + d);
    let padded = g.padded_h * g.padded_w;
    let n = g.tokens_per_window();
    let attention = 2 * g.num_windows() * n * n * d;
    let flops = padded * d * 3 * d + attention + padded * d * d + 2 * g.h * g.w * d * hidden;
    (params, flops, attention)
}
