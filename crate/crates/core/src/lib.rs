//! Shifted-window transformer for CT slice classification and segmentation:
//! backbone, heads, metrics, complexity accounting and training.

pub mod bench;
pub mod complexity;
mod error;
pub mod heads;
pub mod metrics;
mod model;
pub mod train;
pub mod params;
pub mod swin;

pub use error::{CoreError, Result};
pub use model::{ModelConfig, SwinModel};
