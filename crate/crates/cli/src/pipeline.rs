use tse_core::baselines::{AdaptiveSmoothing, Inter2d, Pinn, PinnConfig};
use tse_core::data::{build_samples, split_dataset, GroundTruthField, SampleSpec, SensorLayout, TrainSample};
use tse_core::eval::Estimator;
use tse_core::nets::{ExtendedModel, Variant};
use tse_core::sim::{simulate_pw, with_sensor_noise};
use tse_core::train::{train, TrainReport};
use tse_core::{Error, Result};

use crate::config::RunConfig;

/// Windows of one field split chronologically.
#[derive(Clone, Debug)]
pub struct Dataset {
    /// Ground truth.
    pub field: GroundTruthField,
    /// Truth with the scenario's measurement noise at input-sensor columns.
    pub observed: GroundTruthField,
    pub layout: SensorLayout,
    pub train: Vec<TrainSample>,
    pub val: Vec<TrainSample>,
    pub test: Vec<TrainSample>,
}

impl Dataset {
    pub fn all(&self) -> Vec<TrainSample> {
        [&self.train[..], &self.val, &self.test].concat()
    }
}

pub fn sample_spec(cfg: &RunConfig) -> Result<SampleSpec> {
    Ok(SampleSpec {
        window: cfg.dataset.window,
        cadence_rows: cfg.cadence_rows()?,
        collocation: cfg.dataset.collocation,
        stride: cfg.dataset.stride,
        seed: cfg.dataset.seed,
    })
}

pub fn ratios(cfg: &RunConfig) -> (f64, f64, f64) {
    let [a, b, c] = cfg.dataset.ratios;
    (a, b, c)
}

/// Splits `field` observed through `layout`; simulates the scenario when no
/// field is given.
pub fn dataset(cfg: &RunConfig, field: Option<GroundTruthField>, layout: SensorLayout) -> Result<Dataset> {
    let field = match field {
        Some(f) => f,
        None => simulate_pw(&cfg.scenario)?,
    };
    let noise = &cfg.scenario.noise;
    let observed = if noise.speed == 0.0 && noise.flow == 0.0 {
        field.clone()
    } else {
        with_sensor_noise(&field, &layout.input_positions(), noise, cfg.scenario.seed)?
    };
    let samples = build_samples(&observed, &layout, &sample_spec(cfg)?)?;
    let (train, val, test) = split_dataset(samples, ratios(cfg))?;
    Ok(Dataset {
        field,
        observed,
        layout,
        train,
        val,
        test,
    })
}

pub fn variant_flags(name: &str) -> Result<Variant> {
    match name {
        "extended" => Ok(Variant::EXTENDED),
        "vanilla" => Ok(Variant::VANILLA),
        other => Err(Error::Config(format!("unknown operator variant `{other}`"))),
    }
}

pub fn train_operator(
    cfg: &RunConfig,
    variant: Variant,
    layout: &SensorLayout,
    train_set: &[TrainSample],
    val: &[TrainSample],
) -> Result<(ExtendedModel, TrainReport)> {
    let mut mc = cfg.model_for(layout.input_positions().len());
    mc.variant = variant;
    let mut model = ExtendedModel::new(mc)?;
    let report = train(&mut model, train_set, val, &cfg.train)?;
    Ok((model, report))
}

pub fn pinn_config(cfg: &RunConfig) -> PinnConfig {
    PinnConfig {
        units: cfg.scenario.units,
        ..cfg.pinn.clone()
    }
}

/// Fits the coordinate network on every window of the input sensors; it
/// never sees evaluation-sensor readings.
pub fn train_pinn(cfg: &RunConfig, data: &Dataset) -> Result<(Pinn, TrainReport)> {
    Pinn::fit(pinn_config(cfg), &data.all(), &cfg.train)
}

/// Non-trainable baseline by name.
pub fn classical_baseline(cfg: &RunConfig, name: &str) -> Result<Box<dyn Estimator>> {
    let units = cfg.scenario.units;
    match name {
        "inter2d" => Ok(Box::new(Inter2d { units })),
        "as" | "adaptive_smoothing" => Ok(Box::new(AdaptiveSmoothing {
            config: cfg.smoothing()?,
            units,
        })),
        other => Err(Error::Config(format!("unknown baseline `{other}`"))),
    }
}
