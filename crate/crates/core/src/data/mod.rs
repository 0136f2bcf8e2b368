//! Sensors, grids, samples and their file formats.

mod domain;
mod estimate;
mod field;
mod samples;
mod trajectory;
mod units;

pub use domain::{QueryCoordinate, Sensor, SensorLayout, SensorRole, SpaceTimeDomain};
pub use estimate::{EstimateField, Lattice};
pub use field::GroundTruthField;
pub use samples::{
    build_samples, draw_collocation, resample_collocation, split_dataset, MeasurementWindow,
    NormStats, ObservedPoint, SampleSpec, TrainSample,
};
pub use trajectory::{
    aggregate_trajectories, format_trajectories, load_trajectories, parse_trajectories,
    TrajectoryPoint,
};
pub(crate) use domain::integral_steps;
pub use units::{FlowUnit, LengthUnit, SpeedUnit, UnitSystem};
