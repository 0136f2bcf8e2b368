//! Adam optimization of the shared losses with validation-based early
//! stopping.

mod adam;
mod config;
mod engine;

pub use adam::{adam_step, AdamState};
pub use config::TrainConfig;
pub use engine::{evaluate_loss, train, EpochRecord, LossRecord, TrainReport};
