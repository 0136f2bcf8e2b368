//! Reproducible runs of the traffic state estimators: configuration,
//! data pipeline, subcommands and run manifests.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod pipeline;

pub use commands::{run, Cli, Command};
