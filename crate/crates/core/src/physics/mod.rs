//! Fundamental diagram, second-order model residuals and loss terms.

mod fd;
mod loss;
mod residuals;

pub use fd::{fd_speed, segment_of, FdNodes, FdParams, PwConstants};
pub use loss::{
    data_loss, parameter_loss, physics_loss, total_loss, FieldModel, LossTerms, LossWeights,
};
pub use residuals::{coordinate_input, pw_residuals, PhysicsContext, PhysicsOptions, ResidualPair};
