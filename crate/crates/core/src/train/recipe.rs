use serde::{Deserialize, Serialize};

use super::optim::AdamWConfig;
use super::schedule::{Schedule, ScheduleKind};
use crate::error::{CoreError, Result};

/// A length measured either in passes over the training set or in steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Span {
    Epochs(u64),
    Steps(u64),
}

impl Span {
    pub fn to_steps(self, steps_per_epoch: u64) -> u64 {
        match self {
            Span::Epochs(e) => e * steps_per_epoch,
            Span::Steps(s) => s,
        }
    }
}

/// Optimizer, schedule and regularization settings for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub name: String,
    pub optimizer: AdamWConfig,
    pub schedule: ScheduleKind,
    pub base_lr: f64,
    #[serde(default)]
    pub min_lr: f64,
    pub warmup: Span,
    pub length: Span,
    pub batch_size: usize,
    #[serde(default)]
    pub drop_path: f64,
    /// EMA decay; `None` disables the shadow weights.
    #[serde(default)]
    pub ema: Option<f64>,
    /// Maximum global gradient norm; `None` disables clipping.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// Whether the loader applies random augmentation to training batches.
    #[serde(default)]
    pub augment: bool,
}

/// EMA decay used when EMA is switched on without an explicit value.
pub const DEFAULT_EMA_DECAY: f64 = 0.9999;

impl Recipe {
    /// AdamW for 300 epochs with a 20-epoch warmup and cosine decay, batch
    /// 28, learning rate 1e-3, weight decay 0.05.
    pub fn regular() -> Self {
        Self {
            name: "regular".into(),
            optimizer: AdamWConfig::with_decay(0.05),
            schedule: ScheduleKind::Cosine,
            base_lr: 1e-3,
            min_lr: 0.0,
            warmup: Span::Epochs(20),
            length: Span::Epochs(300),
            batch_size: 28,
            drop_path: 0.2,
            ema: None,
            grad_clip: None,
            augment: true,
        }
    }

    /// 30 epochs, 5-epoch warmup, linear decay from 1e-5, weight decay 1e-8.
    pub fn finetune() -> Self {
        Self {
            name: "finetune".into(),
            optimizer: AdamWConfig::with_decay(1e-8),
            schedule: ScheduleKind::Linear,
            base_lr: 1e-5,
            min_lr: 0.0,
            warmup: Span::Epochs(5),
            length: Span::Epochs(30),
            batch_size: 28,
            drop_path: 0.2,
            ema: None,
            grad_clip: None,
            augment: true,
        }
    }

    /// 40k iterations with a 1500-iteration warmup and linear decay,
    /// learning rate 1e-4, weight decay 0.01, stochastic depth 0.2.
    pub fn segmentation() -> Self {
        Self {
            name: "segmentation".into(),
            optimizer: AdamWConfig::with_decay(0.01),
            schedule: ScheduleKind::Linear,
            base_lr: 1e-4,
            min_lr: 0.0,
            warmup: Span::Steps(1500),
            length: Span::Steps(40_000),
            batch_size: 2,
            drop_path: 0.2,
            ema: None,
            grad_clip: None,
            augment: true,
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        match name {
            "regular" => Ok(Self::regular()),
            "finetune" => Ok(Self::finetune()),
            "segmentation" => Ok(Self::segmentation()),
            _ => Err(CoreError::config(format!("unknown recipe `{name}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CoreError::config("batch_size must be positive"));
        }
        if self.length.to_steps(1) == 0 {
            return Err(CoreError::config("recipe length must be positive"));
        }
        if !(0.0..1.0).contains(&self.drop_path) {
            return Err(CoreError::config(format!("drop_path {} outside [0, 1)", self.drop_path)));
        }
        if let Some(d) = self.ema {
            if !(0.0..=1.0).contains(&d) {
                return Err(CoreError::config(format!("EMA decay {d} outside [0, 1]")));
            }
        }
        if let Some(c) = self.grad_clip {
            if c.is_nan() || c <= 0.0 {
                return Err(CoreError::config(format!("grad_clip {c} must be positive")));
            }
        }
        Ok(())
    }

    /// Training steps per epoch: the last incomplete batch is dropped, but a
    /// set smaller than one batch still yields one step.
    pub fn steps_per_epoch(&self, dataset_len: usize) -> u64 {
        ((dataset_len / self.batch_size) as u64).max(1)
    }

    pub fn schedule(&self, dataset_len: usize) -> Result<Schedule> {
        let spe = self.steps_per_epoch(dataset_len);
        Schedule::new(
            self.schedule,
            self.base_lr,
            self.warmup.to_steps(spe),
            self.length.to_steps(spe),
            self.min_lr,
        )
    }
}
