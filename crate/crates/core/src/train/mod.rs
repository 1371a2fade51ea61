//! Optimizer, schedules, recipes, checkpoints and the training loop.

pub mod checkpoint;
mod engine;
mod optim;
mod recipe;
mod schedule;

pub use engine::{
    derive_seed, evaluate, run_recipe, Batch, Dataset, EvalPoint, RunSummary, Targets, TrainOptions, CURVE_FILE,
    DIAGNOSTIC_FILE, STEPS_FILE,
};
pub use optim::{adamw_update, clip_grad_norm, collect_grads, first_non_finite, global_grad_norm, AdamW, AdamWConfig, Ema};
pub use recipe::{Recipe, Span, DEFAULT_EMA_DECAY};
pub use schedule::{Schedule, ScheduleKind};
