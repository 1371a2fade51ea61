//! Task heads and their losses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use swinct_tensor::Tensor;

use crate::error::{CoreError, Result};
use crate::params::{LayerNorm, Linear, ParamStore};
use crate::swin::SwinConfig;

/// Label value excluded from pixel losses and metrics.
pub const IGNORE_INDEX: usize = 255;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeadConfig {
    Classifier { num_classes: usize },
    Segmentation { num_classes: usize, decoder_dim: usize },
}

impl HeadConfig {
    pub fn num_classes(&self) -> usize {
        match *self {
            HeadConfig::Classifier { num_classes } | HeadConfig::Segmentation { num_classes, .. } => num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes() < 2 {
            return Err(CoreError::config("a head needs at least 2 classes"));
        }
        if let HeadConfig::Segmentation { decoder_dim: 0, .. } = self {
            return Err(CoreError::config("decoder_dim must be positive"));
        }
        Ok(())
    }
}

/// Layer norm, mean over tokens, then a linear map to class logits.
#[derive(Debug, Clone)]
pub struct ClassifierHead {
    pub norm: LayerNorm,
    pub fc: Linear,
}

impl ClassifierHead {
    pub fn new(ps: &mut ParamStore, rng: &mut ChaCha8Rng, dim: usize, num_classes: usize) -> Self {
        Self {
            norm: LayerNorm::new(ps, "head.norm", dim),
            fc: Linear::new(ps, rng, "head.fc", dim, num_classes, true),
        }
    }

    /// Final-stage grid `[B, h, w, D]` to logits `[B, classes]`.
    pub fn forward(&self, ps: &ParamStore, features: &Tensor) -> Result<Tensor> {
        let (b, t, d) = match *features.shape() {
            [b, h, w, d] => (b, h * w, d),
            ref s => return Err(CoreError::config(format!("classifier expects [B, h, w, D], got {s:?}"))),
        };
        if d != self.fc.in_dim {
            return Err(CoreError::config(format!("classifier built for dim {}, got {d}", self.fc.in_dim)));
        }
        let pooled = self.norm.forward(ps, &features.reshape(&[b, t, d])?)?.mean_axis(1)?;
        self.fc.forward(ps, &pooled)
    }
}

/// Multi-scale fusion decoder: per-stage linear laterals, nearest upsampling
/// to the first stage's grid, summation, a 3×3 convolution with GELU, a
/// per-pixel classifier and bilinear upsampling to the input size.
#[derive(Debug, Clone)]
pub struct SegDecoder {
    pub laterals: Vec<Linear>,
    pub fuse: Linear,
    pub classifier: Linear,
    pub decoder_dim: usize,
    pub out_size: usize,
}

impl SegDecoder {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        cfg: &SwinConfig,
        decoder_dim: usize,
        num_classes: usize,
    ) -> Self {
        let laterals = (0..4)
            .map(|i| Linear::new(ps, rng, &format!("decoder.lateral.{i}"), cfg.stage_dim(i), decoder_dim, true))
            .collect();
        Self {
            laterals,
            fuse: Linear::new(ps, rng, "decoder.fuse", 9 * decoder_dim, decoder_dim, true),
            classifier: Linear::new(ps, rng, "decoder.classifier", decoder_dim, num_classes, true),
            decoder_dim,
            out_size: cfg.img_size,
        }
    }

    /// Stage features to per-pixel logits `[B, H, W, classes]`.
    pub fn forward(&self, ps: &ParamStore, features: &[Tensor]) -> Result<Tensor> {
        if features.len() != 4 {
            return Err(CoreError::config(format!("decoder expects 4 stage grids, got {}", features.len())));
        }
        let base = features[0].shape()[1];
        let mut fused: Option<Tensor> = None;
        for (i, (f, lateral)) in features.iter().zip(&self.laterals).enumerate() {
            if f.rank() != 4 || f.shape()[3] != lateral.in_dim {
                return Err(CoreError::config(format!(
                    "stage {i} features {:?} do not match lateral input dim {}",
                    f.shape(),
                    lateral.in_dim
                )));
            }
            let mut y = lateral.forward(ps, f)?;
            let r = f.shape()[1];
            if r != base {
                if r == 0 || !base.is_multiple_of(r) {
                    return Err(CoreError::config(format!("stage {i} grid {r} does not divide {base}")));
                }
                y = y.upsample_nearest(base / r)?;
            }
            fused = Some(match fused {
                Some(acc) => acc.add(&y)?,
                None => y,
            });
        }
        let fused = fused.expect("four stages");
        let conv = self.fuse.forward(ps, &fused.im2col3x3()?)?.gelu();
        let logits = self.classifier.forward(ps, &conv)?;
        Ok(logits.resize_bilinear(self.out_size, self.out_size)?)
    }
}

#[derive(Debug, Clone)]
pub enum Head {
    Classifier(ClassifierHead),
    Segmentation(SegDecoder),
}

impl Head {
    pub fn new(ps: &mut ParamStore, cfg: &SwinConfig, head: &HeadConfig, seed: u64) -> Result<Self> {
        head.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(match *head {
            HeadConfig::Classifier { num_classes } => {
                Head::Classifier(ClassifierHead::new(ps, &mut rng, cfg.final_dim(), num_classes))
            }
            HeadConfig::Segmentation { num_classes, decoder_dim } => {
                Head::Segmentation(SegDecoder::new(ps, &mut rng, cfg, decoder_dim, num_classes))
            }
        })
    }

    pub fn forward(&self, ps: &ParamStore, features: &[Tensor]) -> Result<Tensor> {
        match self {
            Head::Classifier(h) => h.forward(ps, features.last().ok_or_else(|| CoreError::config("no features"))?),
            Head::Segmentation(d) => d.forward(ps, features),
        }
    }
}

/// Fused softmax cross-entropy on logits `[N, M]`, averaged over samples.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    check_labels(labels, logits.shape().last().copied().unwrap_or(0), None)?;
    Ok(logits.softmax_cross_entropy(labels, None)?)
}

/// Cross-entropy of explicit probabilities, `−(1/N) Σ_i log p_i,y_i`.
pub fn cross_entropy_probs(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(CoreError::data(format!("{} probability rows for {} labels", probs.len(), labels.len())));
    }
    let mut total = 0.0;
    for (row, &y) in probs.iter().zip(labels) {
        let p = *row
            .get(y)
            .ok_or_else(|| CoreError::data(format!("label {y} out of range for {} classes", row.len())))?;
        total -= p.ln();
    }
    Ok(total / labels.len() as f64)
}

/// Mean per-pixel cross-entropy of logits `[B, H, W, M]` against masks,
/// skipping pixels labelled [`IGNORE_INDEX`].
pub fn pixel_cross_entropy(logits: &Tensor, mask: &[usize]) -> Result<Tensor> {
    let shape = logits.shape();
    let m = *shape.last().ok_or_else(|| CoreError::config("scalar logits"))?;
    let pixels = logits.numel() / m.max(1);
    if mask.len() != pixels {
        return Err(CoreError::data(format!("mask has {} pixels, logits have {pixels}", mask.len())));
    }
    check_labels(mask, m, Some(IGNORE_INDEX))?;
    if mask.iter().all(|&v| v == IGNORE_INDEX) {
        return Err(CoreError::data("every pixel is ignored"));
    }
    Ok(logits.reshape(&[pixels, m])?.softmax_cross_entropy(mask, Some(IGNORE_INDEX))?)
}

fn check_labels(labels: &[usize], classes: usize, ignore: Option<usize>) -> Result<()> {
    match labels.iter().find(|&&y| y >= classes && Some(y) != ignore) {
        Some(y) => Err(CoreError::data(format!("label {y} out of range for {classes} classes"))),
        None => Ok(()),
    }
}
