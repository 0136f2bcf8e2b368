//! Physics-informed deep operator networks for freeway traffic state
//! estimation.
//!
//! The crate maps sparse sensor windows of flow and speed to dense
//! space-time estimates. It bundles a small autodiff engine, a
//! Payne–Whitham physics loss, the extended operator network with its
//! parameter network, classical and neural baselines, a macroscopic traffic
//! simulator and an evaluation harness.

pub mod autodiff;
pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod nets;
pub mod physics;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
