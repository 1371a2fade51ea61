//! The shifted-window transformer backbone.
//!
//! Token grids are `[B, H, W, C]` tensors throughout.

mod attention;
mod backbone;
mod block;
mod config;
mod window;

pub use attention::{expand_mask, RelativePositionBias, WindowAttention};
pub use backbone::{Backbone, PatchEmbed, PatchMerge, Stage};
pub use block::{Mlp, SwinBlock};
pub use config::{shift_size, StageGeometry, SwinConfig};
pub use window::{
    build_padded_mask, build_shift_mask, relative_position_index, window_partition, window_reverse,
    AttentionMask, NEG, PAD_REGION,
};
