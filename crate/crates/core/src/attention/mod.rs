//! Feature grids, 1×1 convolutions, response maps and residual attention
//! blocks for the Gaussian, Embedded Gaussian, Dot-product and
//! Concatenation kinds, plus the squeeze reshape.

mod block;
mod conv;
mod grid;
mod phi;
mod response;
mod squeeze;

pub use block::{
    attention_apply, residual_forward, AttentionBlock, AttentionKind, BlockConfig, ResidualBranch,
    Variant,
};
pub use conv::{apply_1x1_conv, SpectralLinear};
pub use grid::FeatureGrid;
pub use phi::PhiActivation;
pub use response::{normalize_response, raw_response, response_map, Normalization, ResponseMap};
pub use squeeze::{squeeze, unsqueeze};
