#![allow(dead_code)]

use tse_core::data::{build_samples, split_dataset, GroundTruthField, SampleSpec, SensorLayout, TrainSample, UnitSystem};
use tse_core::nets::ModelConfig;
use tse_core::physics::{FdParams, PwConstants};
use tse_core::sim::{simulate_pw, BoundaryKind, InitialState, NoiseConfig, Profile, ScenarioConfig, SensorConfig};

pub const FD: FdParams = FdParams {
    v_f: 100.0,
    rho_c: 0.025,
    a: 2.0,
};

/// One-kilometre stretch with a demand surge, three input sensors and two
/// evaluation sensors.
pub fn small_scenario() -> ScenarioConfig {
    ScenarioConfig {
        id: "small".into(),
        units: UnitSystem::METRIC,
        length: 1000.0,
        horizon: 600.0,
        dx: 50.0,
        dt: 1.0,
        output_dt: 5.0,
        pw: PwConstants::default(),
        jam_density: 0.15,
        segments: vec![FD, FdParams { v_f: 80.0, rho_c: 0.02, a: 2.0 }],
        initial: InitialState::Uniform { density: 0.01 },
        boundary: BoundaryKind::Profiles,
        demand: Profile {
            points: vec![[0.0, 900.0], [200.0, 1800.0], [400.0, 1000.0]],
        },
        downstream_speed: Profile::constant(80.0),
        sensors: SensorConfig {
            inputs: vec![0.0, 500.0, 1000.0],
            evaluation: vec![250.0, 750.0],
            cadence: 5.0,
        },
        noise: NoiseConfig::default(),
        seed: 3,
    }
}

pub fn small_field() -> (GroundTruthField, SensorLayout) {
    let cfg = small_scenario();
    (simulate_pw(&cfg).unwrap(), cfg.layout().unwrap())
}

pub fn small_splits(p: usize) -> (Vec<TrainSample>, Vec<TrainSample>, Vec<TrainSample>) {
    let (field, layout) = small_field();
    let spec = SampleSpec {
        window: 4,
        cadence_rows: 1,
        collocation: p,
        stride: 4,
        seed: 1,
    };
    let samples = build_samples(&field, &layout, &spec).unwrap();
    split_dataset(samples, (0.7, 0.1, 0.2)).unwrap()
}

pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        k: 4,
        window: 4,
        sensors: 3,
        conv_channels: vec![2, 3],
        head: vec![5],
        trunk_width: 6,
        trunk_layers: 2,
        segments: 2,
        seed: 7,
        ..ModelConfig::default()
    }
}
