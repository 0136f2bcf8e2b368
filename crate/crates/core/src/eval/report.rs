use serde::{Deserialize, Serialize};

use super::metrics::{re, rmse};
use crate::data::{EstimateField, GroundTruthField, Lattice, MeasurementWindow, TrainSample};
use crate::error::{Error, Result};
use crate::nets::ExtendedModel;

/// A state estimator driven only by a window of input-sensor readings.
pub trait Estimator {
    fn name(&self) -> String;

    /// Physical-unit estimates at `lattice`, normalized to the window.
    fn estimate(&self, window: &MeasurementWindow, lattice: &Lattice) -> Result<EstimateField>;
}

impl Estimator for ExtendedModel {
    fn name(&self) -> String {
        self.config().variant.name().into()
    }

    fn estimate(&self, window: &MeasurementWindow, lattice: &Lattice) -> Result<EstimateField> {
        self.estimate_field(window, lattice)
    }
}

pub const HISTOGRAM_BIN_WIDTH: f64 = 5.0;
/// Bins `[0,5), ..., [45,50)` plus the overflow bin `[50, inf)`.
pub const HISTOGRAM_BINS: usize = 11;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableMetrics {
    pub rmse: f64,
    /// Percent.
    pub re: f64,
}

impl VariableMetrics {
    fn of(est: &[f64], truth: &[f64]) -> Result<Self> {
        Ok(Self {
            rmse: rmse(est, truth)?,
            re: re(est, truth)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorErrors {
    pub position: f64,
    pub speed: VariableMetrics,
    pub flow: VariableMetrics,
}

/// Counts of per-point relative errors in 5%-wide bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub speed: Vec<u64>,
    pub flow: Vec<u64>,
}

pub fn histogram_bin(est: f64, truth: f64) -> usize {
    let err = (est - truth).abs();
    if err == 0.0 {
        return 0;
    }
    if truth == 0.0 {
        return HISTOGRAM_BINS - 1;
    }
    let pct = err / truth.abs() * 100.0;
    ((pct / HISTOGRAM_BIN_WIDTH).floor() as usize).min(HISTOGRAM_BINS - 1)
}

fn histogram(est: &[f64], truth: &[f64]) -> Vec<u64> {
    let mut bins = vec![0; HISTOGRAM_BINS];
    for (a, b) in est.iter().zip(truth) {
        bins[histogram_bin(*a, *b)] += 1;
    }
    bins
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMeta {
    pub method: String,
    pub scenario: String,
    /// Input sensors available to the method.
    pub sensor_count: usize,
    pub seed: u64,
}

/// Pooled test-set errors at the evaluation sensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: EvalMeta,
    pub points: usize,
    pub speed: VariableMetrics,
    pub flow: VariableMetrics,
    pub sensors: Vec<SensorErrors>,
    pub histogram: Histogram,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Field rows covered by a sample's window and their normalized times.
pub(crate) fn window_rows(s: &TrainSample) -> (Vec<usize>, Vec<f64>) {
    let span_rows = (s.window.rows - 1) * s.row_step;
    let rows: Vec<usize> = (s.anchor_row..=s.anchor_row + span_rows).collect();
    let ts = rows.iter().map(|r| (r - s.anchor_row) as f64 / span_rows as f64).collect();
    (rows, ts)
}

fn same_position(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Scores `method` on every test window at the evaluation sensors, using
/// `field` only as ground truth.
pub fn evaluate_method(
    method: &dyn Estimator,
    test: &[TrainSample],
    field: &GroundTruthField,
    inputs: &[f64],
    evaluation: &[f64],
    meta: EvalMeta,
) -> Result<EvalReport> {
    let overlap: Vec<f64> = evaluation
        .iter()
        .copied()
        .filter(|e| inputs.iter().any(|i| same_position(*i, *e)))
        .collect();
    if !overlap.is_empty() {
        return Err(Error::SensorOverlap(overlap));
    }
    if evaluation.is_empty() || test.is_empty() {
        return Err(Error::InsufficientData("evaluation needs test samples and evaluation sensors".into()));
    }
    let cols: Vec<usize> = evaluation.iter().map(|&x| field.column_of(x)).collect::<Result<_>>()?;
    let xs: Vec<f64> = evaluation.iter().map(|&x| x / field.length()).collect();
    let n = evaluation.len();
    let mut per_v: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); n];
    let mut per_q: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); n];
    for s in test {
        let w = &s.window;
        let clean = w.positions.len() == inputs.len()
            && w.positions.iter().zip(inputs).all(|(a, b)| same_position(*a, *b));
        if !clean || w.positions.iter().any(|p| evaluation.iter().any(|e| same_position(*p, *e))) {
            return Err(Error::InvalidArgument(format!(
                "window at t0={} carries sensors {:?} other than the inputs",
                w.t0, w.positions
            )));
        }
        let (rows, ts) = window_rows(s);
        let est = method.estimate(w, &Lattice::new(xs.clone(), ts)?)?;
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                per_v[j].0.push(est.speed_at(i, j));
                per_v[j].1.push(field.speed_at(r, c));
                per_q[j].0.push(est.flow_at(i, j));
                per_q[j].1.push(field.flow_at(r, c));
            }
        }
    }
    let pool = |per: &[(Vec<f64>, Vec<f64>)]| -> (Vec<f64>, Vec<f64>) {
        let est = per.iter().flat_map(|p| p.0.iter().copied()).collect();
        let truth = per.iter().flat_map(|p| p.1.iter().copied()).collect();
        (est, truth)
    };
    let (ve, vt) = pool(&per_v);
    let (qe, qt) = pool(&per_q);
    let sensors = (0..n)
        .map(|j| {
            Ok(SensorErrors {
                position: evaluation[j],
                speed: VariableMetrics::of(&per_v[j].0, &per_v[j].1)?,
                flow: VariableMetrics::of(&per_q[j].0, &per_q[j].1)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        meta,
        points: ve.len(),
        speed: VariableMetrics::of(&ve, &vt)?,
        flow: VariableMetrics::of(&qe, &qt)?,
        sensors,
        histogram: Histogram {
            bin_width: HISTOGRAM_BIN_WIDTH,
            speed: histogram(&ve, &vt),
            flow: histogram(&qe, &qt),
        },
    })
}
