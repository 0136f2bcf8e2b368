use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::NoiseConfig;
use crate::data::{integral_steps, GroundTruthField};
use crate::error::{Error, Result};

/// Readings of a set of detectors; `speed[w][k]` is sensor `w` at
/// `times[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorSeries {
    pub positions: Vec<f64>,
    pub times: Vec<f64>,
    pub speed: Vec<Vec<f64>>,
    pub flow: Vec<Vec<f64>>,
}

fn normal(std: f64) -> Result<Option<Normal<f64>>> {
    if std == 0.0 {
        return Ok(None);
    }
    Normal::new(0.0, std)
        .map(Some)
        .map_err(|e| Error::InvalidArgument(format!("noise std {std}: {e}")))
}

/// Reads the field at sensor columns every `cadence` seconds and adds
/// seeded Gaussian noise, clamping at zero.
pub fn sample_sensors(
    field: &GroundTruthField,
    positions: &[f64],
    cadence: f64,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<SensorSeries> {
    let every = integral_steps(cadence, field.dt)
        .filter(|k| *k >= 1)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "cadence {cadence} is not a positive multiple of dt {}",
                field.dt
            ))
        })?;
    let cols: Vec<usize> = positions
        .iter()
        .map(|&x| field.column_of(x))
        .collect::<Result<_>>()?;
    let rows: Vec<usize> = (0..field.rows()).step_by(every).collect();
    let (nv, nq) = (normal(noise.speed)?, normal(noise.flow)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut speed = Vec::with_capacity(cols.len());
    let mut flow = Vec::with_capacity(cols.len());
    for &c in &cols {
        let mut vs = Vec::with_capacity(rows.len());
        let mut qs = Vec::with_capacity(rows.len());
        for &r in &rows {
            let mut v = field.speed_at(r, c);
            let mut q = field.flow_at(r, c);
            if let Some(d) = &nv {
                v = (v + d.sample(&mut rng)).max(0.0);
            }
            if let Some(d) = &nq {
                q = (q + d.sample(&mut rng)).max(0.0);
            }
            vs.push(v);
            qs.push(q);
        }
        speed.push(vs);
        flow.push(qs);
    }
    Ok(SensorSeries {
        positions: positions.to_vec(),
        times: rows.iter().map(|&r| r as f64 * field.dt).collect(),
        speed,
        flow,
    })
}

/// Copy of `field` whose columns at `positions` carry seeded measurement
/// noise; every other column is untouched.
pub fn with_sensor_noise(
    field: &GroundTruthField,
    positions: &[f64],
    noise: &NoiseConfig,
    seed: u64,
) -> Result<GroundTruthField> {
    let series = sample_sensors(field, positions, field.dt, noise, seed)?;
    let mut speed = field.speed().to_vec();
    let mut flow = field.flow().to_vec();
    let cols = field.cols();
    for (w, &x) in positions.iter().enumerate() {
        let c = field.column_of(x)?;
        for r in 0..field.rows() {
            speed[r * cols + c] = series.speed[w][r];
            flow[r * cols + c] = series.flow[w][r];
        }
    }
    GroundTruthField::new(field.units, field.dx, field.dt, field.rows(), cols, speed, flow)
}
