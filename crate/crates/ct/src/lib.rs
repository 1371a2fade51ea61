//! CT preprocessing for nodule classification and segmentation: volume I/O,
//! cropping and slicing, augmentation, split assembly, a phantom generator
//! and a training dataset over the prepared slices.

pub mod augment;
pub mod dataset;
mod error;
pub mod phantom;
pub mod prepare;
pub mod sampling;
pub mod slicing;
pub mod splits;
pub mod store;
pub mod volume;

pub use error::{CtError, Result};
