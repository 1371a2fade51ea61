use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Cosine,
    Linear,
    Constant,
}

/// Linear warmup from zero followed by a decay to `min_lr`, in steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub min_lr: f64,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, base_lr: f64, warmup_steps: u64, total_steps: u64, min_lr: f64) -> Result<Self> {
        if warmup_steps > total_steps {
            return Err(CoreError::config(format!(
                "warmup of {warmup_steps} steps exceeds the {total_steps}-step schedule"
            )));
        }
        if !(base_lr >= 0.0 && min_lr >= 0.0 && base_lr.is_finite() && min_lr.is_finite()) {
            return Err(CoreError::config("learning rates must be finite and non-negative"));
        }
        Ok(Self { kind, base_lr, warmup_steps, total_steps, min_lr })
    }

    pub fn lr_at(&self, step: u64) -> Result<f64> {
        if step > self.total_steps {
            return Err(CoreError::Usage(format!(
                "step {step} is past the end of a {}-step schedule",
                self.total_steps
            )));
        }
        if step < self.warmup_steps {
            return Ok(self.base_lr * step as f64 / self.warmup_steps as f64);
        }
        let span = self.total_steps - self.warmup_steps;
        let tau = if span == 0 { 0.0 } else { (step - self.warmup_steps) as f64 / span as f64 };
        let (base, min) = (self.base_lr, self.min_lr);
        Ok(match self.kind {
            ScheduleKind::Constant => base,
            ScheduleKind::Linear => base + (min - base) * tau,
            ScheduleKind::Cosine => min + (base - min) * (1.0 + (std::f64::consts::PI * tau).cos()) / 2.0,
        })
    }
}
