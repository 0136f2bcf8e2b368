//! Macroscopic simulators producing ground-truth fields with known
//! fundamental diagrams.

mod config;
mod sensors;
mod solver;

pub use config::{
    BoundaryKind, InitialState, NoiseConfig, Profile, ScenarioConfig, SensorConfig,
};
pub use sensors::{sample_sensors, with_sensor_noise, SensorSeries};
pub use solver::{
    simulate_lwr_detailed, simulate_lwr_godunov, simulate_pw, simulate_pw_detailed, SimOutput,
    SimStats,
};
