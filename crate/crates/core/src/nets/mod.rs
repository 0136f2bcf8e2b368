//! Operator networks: convolutional branches, gated-attention trunk, MIMO
//! composition and the per-segment parameter network.

mod checkpoint;
mod config;
mod layers;
mod model;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{FdRanges, ModelConfig, Variant};
pub use model::{mimo_combine, nonlinear_expand, Branch, ExtendedModel, Geometry};
pub(crate) use layers::{dense, Init};
