use serde::{Deserialize, Serialize};

use crate::data::{SensorLayout, SpaceTimeDomain, UnitSystem};
use crate::error::{Error, Result};
use crate::physics::{FdParams, PwConstants};

/// Piecewise-linear function of time through `(t, value)` knots, constant
/// outside the knot range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub points: Vec<[f64; 2]>,
}

impl Profile {
    pub fn constant(value: f64) -> Self {
        Self {
            points: vec![[0.0, value]],
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        let p = &self.points;
        if t <= p[0][0] {
            return p[0][1];
        }
        for w in p.windows(2) {
            let ([t0, v0], [t1, v1]) = (w[0], w[1]);
            if t <= t1 {
                if t1 == t0 {
                    return v1;
                }
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
            }
        }
        p[p.len() - 1][1]
    }

    fn validate(&self, name: &str, strictly_positive: bool) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Config(format!("{name} profile has no points")));
        }
        for w in self.points.windows(2) {
            if w[1][0] < w[0][0] {
                return Err(Error::Config(format!("{name} profile times must be ascending")));
            }
        }
        for [t, v] in &self.points {
            let ok = t.is_finite() && v.is_finite() && if strictly_positive { *v > 0.0 } else { *v >= 0.0 };
            if !ok {
                return Err(Error::Config(format!("{name} profile has invalid point ({t}, {v})")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialState {
    /// Uniform density (veh per length unit) at equilibrium speed.
    Uniform { density: f64 },
    /// Two equilibrium states separated at `position`.
    Riemann {
        left_density: f64,
        right_density: f64,
        position: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    /// Upstream demand and downstream speed profiles drive the ends.
    Profiles,
    /// Ghost cells copy the adjacent interior cell.
    Transmissive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub inputs: Vec<f64>,
    #[serde(default)]
    pub evaluation: Vec<f64>,
    /// Seconds between sensor readings.
    pub cadence: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviation in speed units.
    #[serde(default)]
    pub speed: f64,
    /// Standard deviation in flow units.
    #[serde(default)]
    pub flow: f64,
}

/// A synthetic stretch with known per-segment diagrams.
///
/// Densities are in vehicles per length unit; profiles use the speed and
/// flow units of `units`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_id")]
    pub id: String,
    pub units: UnitSystem,
    pub length: f64,
    pub horizon: f64,
    pub dx: f64,
    /// Integration step (s).
    pub dt: f64,
    /// Row spacing of the emitted field (s); a multiple of `dt`.
    pub output_dt: f64,
    #[serde(default)]
    pub pw: PwConstants,
    pub jam_density: f64,
    pub segments: Vec<FdParams>,
    pub initial: InitialState,
    #[serde(default = "default_boundary")]
    pub boundary: BoundaryKind,
    pub demand: Profile,
    pub downstream_speed: Profile,
    pub sensors: SensorConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_id() -> String {
    "scenario".into()
}

fn default_boundary() -> BoundaryKind {
    BoundaryKind::Profiles
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        SpaceTimeDomain::new(self.length, self.horizon, self.dx, self.dt, self.units)?;
        SpaceTimeDomain::new(self.length, self.horizon, self.dx, self.output_dt, self.units)?;
        if crate::data::integral_steps(self.output_dt, self.dt).is_none() {
            return Err(Error::Config(format!(
                "output_dt {} is not a multiple of dt {}",
                self.output_dt, self.dt
            )));
        }
        if self.segments.is_empty() {
            return Err(Error::Config("at least one segment is required".into()));
        }
        for s in &self.segments {
            s.validate()?;
        }
        self.pw.validate()?;
        let max_rho_c = self.segments.iter().map(|s| s.rho_c).fold(0.0, f64::max);
        if !(self.jam_density > max_rho_c) {
            return Err(Error::Config(format!(
                "jam density {} must exceed every critical density",
                self.jam_density
            )));
        }
        self.demand.validate("demand", false)?;
        self.downstream_speed.validate("downstream speed", true)?;
        if !(self.noise.speed >= 0.0 && self.noise.flow >= 0.0) {
            return Err(Error::Config("noise standard deviations must be nonnegative".into()));
        }
        let dens = match self.initial {
            InitialState::Uniform { density } => vec![density],
            InitialState::Riemann {
                left_density,
                right_density,
                ..
            } => vec![left_density, right_density],
        };
        if dens.iter().any(|d| !(*d >= 0.0 && *d <= self.jam_density)) {
            return Err(Error::Config(format!("initial densities {dens:?} outside [0, jam]")));
        }
        self.layout()?;
        Ok(())
    }

    pub fn domain(&self) -> Result<SpaceTimeDomain> {
        SpaceTimeDomain::new(self.length, self.horizon, self.dx, self.output_dt, self.units)
    }

    pub fn layout(&self) -> Result<SensorLayout> {
        SensorLayout::from_positions(&self.sensors.inputs, &self.sensors.evaluation, self.length)
    }

    /// Largest stable integration step for the second-order scheme.
    pub fn cfl_limit(&self) -> f64 {
        let vmax = self
            .segments
            .iter()
            .map(|s| s.v_f * self.units.speed_to_base())
            .fold(0.0, f64::max);
        self.dx / (vmax + self.pw.c.sqrt())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
