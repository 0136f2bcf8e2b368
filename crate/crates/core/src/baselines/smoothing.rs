use serde::{Deserialize, Serialize};

use crate::data::{EstimateField, Lattice, MeasurementWindow, UnitSystem};
use crate::error::{Error, Result};
use crate::eval::Estimator;

/// Kernel widths and characteristic speeds of the adaptive smoothing
/// filter, in the unit system of the data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsConfig {
    /// Spatial kernel width (length units).
    pub sigma: f64,
    /// Temporal kernel width (s).
    pub tau_s: f64,
    /// Free-flow wave speed (speed units, positive).
    pub c_free: f64,
    /// Congested wave speed (speed units, negative).
    pub c_cong: f64,
    /// Crossover speed between the two regimes.
    pub v_c: f64,
    /// Width of the crossover.
    pub delta_v: f64,
}

impl AsConfig {
    /// Canonical widths and wave speeds expressed in `units`; `cadence` is
    /// the sensing interval in seconds.
    pub fn defaults(units: &UnitSystem, cadence: f64) -> Self {
        let sigma = match units.length {
            crate::data::LengthUnit::Meters => 600.0,
            crate::data::LengthUnit::Feet => 200.0,
        };
        Self {
            sigma,
            tau_s: 1.1 * cadence,
            c_free: units.speed_from_kmh(80.0),
            c_cong: units.speed_from_kmh(-15.0),
            v_c: units.speed_from_kmh(60.0),
            delta_v: units.speed_from_kmh(20.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma > 0.0 && self.tau_s > 0.0 && self.c_cong < 0.0 && self.c_free > 0.0 && self.delta_v > 0.0;
        if !ok || !self.v_c.is_finite() {
            return Err(Error::Config(format!("invalid adaptive smoothing parameters {self:?}")));
        }
        Ok(())
    }
}

/// Observation with physical coordinates.
struct Obs {
    x: f64,
    t: f64,
    v: f64,
    q: f64,
}

/// Kernel-weighted `(speed, flow)` along characteristics of speed `c`
/// (length-unit/s).
fn smooth(obs: &[Obs], x: f64, t: f64, c: f64, cfg: &AsConfig) -> Result<(f64, f64)> {
    let (mut mass, mut sv, mut sq) = (0.0, 0.0, 0.0);
    for o in obs {
        let (dx, dt) = (x - o.x, t - o.t);
        let w = (-(dx - c * dt).abs() / cfg.sigma - dt.abs() / cfg.tau_s).exp();
        mass += w;
        sv += w * o.v;
        sq += w * o.q;
    }
    if !(mass > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "zero kernel mass at x={x}, t={t}; kernel widths too small for the data spacing"
        )));
    }
    Ok((sv / mass, sq / mass))
}

/// Adaptive smoothing over the observations of `window`.
///
/// Speed and flow share the regime weight computed from the speed
/// estimates.
pub fn adaptive_smoothing_estimate(
    window: &MeasurementWindow,
    config: &AsConfig,
    lattice: &Lattice,
    units: UnitSystem,
) -> Result<EstimateField> {
    config.validate()?;
    window.validate()?;
    let span = window.span();
    let mut obs = Vec::with_capacity(window.rows * window.cols);
    for r in 0..window.rows {
        for (c, &x) in window.positions.iter().enumerate() {
            obs.push(Obs {
                x,
                t: r as f64 * window.interval,
                v: window.speed_at(r, c),
                q: window.flow_at(r, c),
            });
        }
    }
    let k = units.speed_to_base();
    let (c_free, c_cong) = (config.c_free * k, config.c_cong * k);
    let mut speed = Vec::with_capacity(lattice.len());
    let mut flow = Vec::with_capacity(lattice.len());
    for p in lattice.points() {
        let (x, t) = (p.x * window.length, p.t * span);
        let (vf, qf) = smooth(&obs, x, t, c_free, config)?;
        let (vc, qc) = smooth(&obs, x, t, c_cong, config)?;
        let w = 0.5 * (1.0 + ((config.v_c - vf.min(vc)) / config.delta_v).tanh());
        speed.push(w * vc + (1.0 - w) * vf);
        flow.push(w * qc + (1.0 - w) * qf);
    }
    EstimateField::new(units, lattice.clone(), speed, flow)
}

/// [`adaptive_smoothing_estimate`] as an evaluation method.
#[derive(Clone, Copy, Debug)]
pub struct AdaptiveSmoothing {
    pub config: AsConfig,
    pub units: UnitSystem,
}

impl Estimator for AdaptiveSmoothing {
    fn name(&self) -> String {
        "adaptive_smoothing".into()
    }

    fn estimate(&self, window: &MeasurementWindow, lattice: &Lattice) -> Result<EstimateField> {
        adaptive_smoothing_estimate(window, &self.config, lattice, self.units)
    }
}
