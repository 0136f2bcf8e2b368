use std::collections::BTreeMap;

use super::report::{evaluate_method, EvalMeta, EvalReport, Estimator};
use crate::data::{build_samples, split_dataset, GroundTruthField, SampleSpec, SensorLayout, TrainSample};
use crate::error::{Error, Result};

/// Everything a sensitivity sweep holds fixed across sensor counts.
#[derive(Clone, Debug)]
pub struct SweepSetup<'a> {
    /// Ground truth.
    pub field: &'a GroundTruthField,
    /// Field the input windows are cut from; differs from `field` only by
    /// measurement noise at sensor columns.
    pub observed: &'a GroundTruthField,
    /// Full layout; inputs are subsampled from it.
    pub layout: &'a SensorLayout,
    pub spec: SampleSpec,
    pub ratios: (f64, f64, f64),
    pub scenario: String,
    pub seed: u64,
}

/// Builds an estimator from the reduced layout and its train and
/// validation windows.
pub type EstimatorBuilder<'b> =
    dyn FnMut(&SensorLayout, &[TrainSample], &[TrainSample]) -> Result<Box<dyn Estimator>> + 'b;

/// Rebuilds and rescores a method for each input-sensor count, keeping the
/// evaluation sensors fixed.
pub fn sensor_sensitivity_sweep(
    setup: &SweepSetup<'_>,
    counts: &[usize],
    builder: &mut EstimatorBuilder<'_>,
) -> Result<BTreeMap<usize, EvalReport>> {
    if let Some(bad) = counts.iter().find(|&&c| c < 2) {
        return Err(Error::InvalidArgument(format!("sensor count must be at least 2, got {bad}")));
    }
    let length = setup.field.length();
    let evaluation = setup.layout.evaluation_positions();
    let mut out = BTreeMap::new();
    for &count in counts {
        let layout = setup.layout.subsample_inputs(count, length)?;
        let samples = build_samples(setup.observed, &layout, &setup.spec)?;
        let (train, val, test) = split_dataset(samples, setup.ratios)?;
        let method = builder(&layout, &train, &val)?;
        let meta = EvalMeta {
            method: method.name(),
            scenario: setup.scenario.clone(),
            sensor_count: count,
            seed: setup.seed,
        };
        let report = evaluate_method(
            method.as_ref(),
            &test,
            setup.field,
            &layout.input_positions(),
            &evaluation,
            meta,
        )?;
        out.insert(count, report);
    }
    Ok(out)
}
