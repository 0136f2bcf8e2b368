//! Comparison methods: interpolation, adaptive smoothing, a coordinate
//! PINN and the vanilla operator network.

mod interp;
mod pinn;
mod smoothing;

pub use interp::{inter2d_estimate, Inter2d};
pub use pinn::{pinn_train_estimate, Pinn, PinnConfig, TimeFrame};
pub use smoothing::{adaptive_smoothing_estimate, AdaptiveSmoothing, AsConfig};

use crate::error::Result;
use crate::nets::{ExtendedModel, ModelConfig, Variant};

/// Operator model with the given architecture switches; everything else
/// comes from `config`.
pub fn vanilla_pideeponet(config: ModelConfig, flags: Variant) -> Result<ExtendedModel> {
    ExtendedModel::new(ModelConfig {
        variant: flags,
        ..config
    })
}
