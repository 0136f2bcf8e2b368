use serde::{Deserialize, Serialize};

use super::units::UnitSystem;
use crate::error::{Error, Result};

const INTEGRAL_TOL: f64 = 1e-9;

/// Number of whole steps of size `step` in `span`, if integral.
pub(crate) fn integral_steps(span: f64, step: f64) -> Option<usize> {
    let n = span / step;
    let r = n.round();
    if (n - r).abs() <= INTEGRAL_TOL * r.max(1.0) {
        Some(r as usize)
    } else {
        None
    }
}

/// Space-time rectangle `[0, L] x [0, T]` with its fine lattice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeDomain {
    pub length: f64,
    pub horizon: f64,
    pub dx: f64,
    pub dt: f64,
    pub units: UnitSystem,
}

impl SpaceTimeDomain {
    pub fn new(length: f64, horizon: f64, dx: f64, dt: f64, units: UnitSystem) -> Result<Self> {
        for (name, v) in [("length", length), ("horizon", horizon), ("dx", dx), ("dt", dt)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if integral_steps(length, dx).is_none() {
            return Err(Error::InvalidArgument(format!(
                "length {length} is not a multiple of dx {dx}"
            )));
        }
        if integral_steps(horizon, dt).is_none() {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} is not a multiple of dt {dt}"
            )));
        }
        Ok(Self {
            length,
            horizon,
            dx,
            dt,
            units,
        })
    }

    /// Number of cells along x.
    pub fn nx(&self) -> usize {
        integral_steps(self.length, self.dx).unwrap_or(0)
    }

    /// Number of cells along t.
    pub fn nt(&self) -> usize {
        integral_steps(self.horizon, self.dt).unwrap_or(0)
    }
}

/// A point of the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryCoordinate {
    pub x: f64,
    pub t: f64,
}

impl QueryCoordinate {
    pub fn new(x: f64, t: f64) -> Result<Self> {
        if !((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&t)) {
            return Err(Error::InvalidArgument(format!(
                "query coordinate ({x}, {t}) outside the unit square"
            )));
        }
        Ok(Self { x, t })
    }

    /// Position in length units given the stretch length.
    pub fn x_physical(&self, length: f64) -> f64 {
        self.x * length
    }

    /// Time in seconds given the window anchor and span.
    pub fn t_physical(&self, t0: f64, span: f64) -> f64 {
        t0 + self.t * span
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorRole {
    Input,
    Evaluation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    pub position: f64,
    pub role: SensorRole,
}

/// Detector positions along the stretch, each tagged input or evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorLayout {
    sensors: Vec<Sensor>,
}

impl SensorLayout {
    pub fn new(mut sensors: Vec<Sensor>, length: f64) -> Result<Self> {
        sensors.sort_by(|a, b| a.position.total_cmp(&b.position));
        let mut dup = Vec::new();
        for w in sensors.windows(2) {
            if w[0].position == w[1].position {
                dup.push(w[0].position);
            }
        }
        if !dup.is_empty() {
            let mixed = sensors
                .windows(2)
                .any(|w| w[0].position == w[1].position && w[0].role != w[1].role);
            return Err(if mixed {
                Error::SensorOverlap(dup)
            } else {
                Error::InvalidArgument(format!("duplicate sensor positions {dup:?}"))
            });
        }
        for s in &sensors {
            if !(s.position.is_finite() && (0.0..=length).contains(&s.position)) {
                return Err(Error::InvalidArgument(format!(
                    "sensor position {} outside [0, {length}]",
                    s.position
                )));
            }
        }
        let layout = Self { sensors };
        if layout.input_positions().len() < 2 {
            return Err(Error::InsufficientData(
                "at least two input sensors are required".into(),
            ));
        }
        Ok(layout)
    }

    /// Builds a layout from separate input and evaluation position lists.
    pub fn from_positions(inputs: &[f64], evaluation: &[f64], length: f64) -> Result<Self> {
        let overlap: Vec<f64> = inputs
            .iter()
            .copied()
            .filter(|x| evaluation.contains(x))
            .collect();
        if !overlap.is_empty() {
            return Err(Error::SensorOverlap(overlap));
        }
        let sensors = inputs
            .iter()
            .map(|&position| Sensor {
                position,
                role: SensorRole::Input,
            })
            .chain(evaluation.iter().map(|&position| Sensor {
                position,
                role: SensorRole::Evaluation,
            }))
            .collect();
        Self::new(sensors, length)
    }

    pub fn sensors(&self) -> &[Sensor] {
        &self.sensors
    }

    pub fn input_positions(&self) -> Vec<f64> {
        self.positions(SensorRole::Input)
    }

    pub fn evaluation_positions(&self) -> Vec<f64> {
        self.positions(SensorRole::Evaluation)
    }

    fn positions(&self, role: SensorRole) -> Vec<f64> {
        self.sensors
            .iter()
            .filter(|s| s.role == role)
            .map(|s| s.position)
            .collect()
    }

    /// Keeps `count` input sensors spread evenly by position, always
    /// retaining the outermost two. Evaluation sensors are untouched.
    pub fn subsample_inputs(&self, count: usize, length: f64) -> Result<Self> {
        let inputs = self.input_positions();
        if count < 2 {
            return Err(Error::InvalidArgument(format!(
                "sensor count must be at least 2, got {count}"
            )));
        }
        if count > inputs.len() {
            return Err(Error::InvalidArgument(format!(
                "requested {count} input sensors but only {} exist",
                inputs.len()
            )));
        }
        let first = inputs[0];
        let last = inputs[inputs.len() - 1];
        let mut chosen: Vec<usize> = Vec::with_capacity(count);
        for k in 0..count {
            let target = first + (last - first) * k as f64 / (count - 1) as f64;
            let mut best = None;
            for (i, &p) in inputs.iter().enumerate() {
                if chosen.contains(&i) {
                    continue;
                }
                let d = (p - target).abs();
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
            chosen.push(best.map(|(i, _)| i).unwrap_or(0));
        }
        chosen.sort_unstable();
        let kept: Vec<f64> = chosen.iter().map(|&i| inputs[i]).collect();
        Self::from_positions(&kept, &self.evaluation_positions(), length)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_requires_integral_steps() {
        let u = UnitSystem::NGSIM;
        let d = SpaceTimeDomain::new(100.0, 60.0, 20.0, 5.0, u).unwrap();
        assert_eq!((d.nx(), d.nt()), (5, 12));
        assert!(SpaceTimeDomain::new(100.0, 60.0, 30.0, 5.0, u).is_err());
        assert!(SpaceTimeDomain::new(-1.0, 60.0, 1.0, 5.0, u).is_err());
    }

    #[test]
    fn query_coordinates_live_in_unit_square() {
        assert!(QueryCoordinate::new(0.5, 1.0).is_ok());
        assert!(QueryCoordinate::new(1.2, 0.0).is_err());
        let q = QueryCoordinate::new(0.25, 0.5).unwrap();
        assert_eq!(q.x_physical(2000.0), 500.0);
        assert_eq!(q.t_physical(100.0, 60.0), 130.0);
    }

    #[test]
    fn layout_rules() {
        let l = SensorLayout::from_positions(&[0.0, 100.0, 200.0], &[50.0], 200.0).unwrap();
        assert_eq!(l.input_positions(), vec![0.0, 100.0, 200.0]);
        assert_eq!(l.evaluation_positions(), vec![50.0]);
        assert!(matches!(
            SensorLayout::from_positions(&[0.0, 100.0], &[100.0], 200.0),
            Err(Error::SensorOverlap(_))
        ));
        assert!(SensorLayout::from_positions(&[0.0], &[], 200.0).is_err());
        assert!(SensorLayout::from_positions(&[0.0, 300.0], &[], 200.0).is_err());
    }

    #[test]
    fn subsampling_is_even_and_keeps_evaluation_set() {
        let inputs: Vec<f64> = (0..11).map(|i| i as f64 * 200.0).collect();
        let evals: Vec<f64> = (0..10).map(|i| 100.0 + i as f64 * 200.0).collect();
        let l = SensorLayout::from_positions(&inputs, &evals, 2000.0).unwrap();
        let three = l.subsample_inputs(3, 2000.0).unwrap();
        assert_eq!(three.input_positions(), vec![0.0, 1000.0, 2000.0]);
        assert_eq!(three.evaluation_positions(), evals);
        let six = l.subsample_inputs(6, 2000.0).unwrap();
        assert_eq!(six.input_positions(), vec![0.0, 400.0, 800.0, 1200.0, 1600.0, 2000.0]);
        assert_eq!(l.subsample_inputs(11, 2000.0).unwrap(), l);
        assert!(l.subsample_inputs(1, 2000.0).is_err());
    }
}
