use serde::{Deserialize, Serialize};

use crate::autodiff::{Array, Graph, ParamSet, Var};
use crate::data::{EstimateField, Lattice, MeasurementWindow, TrainSample, UnitSystem};
use crate::error::{Error, Result};
use crate::eval::Estimator;
use crate::nets::{dense, Checkpoint, Geometry, Init};
use crate::physics::{segment_of, FdNodes, FdParams, FieldModel, PhysicsContext, PhysicsOptions, PwConstants};
use crate::train::{train, TrainConfig, TrainReport};

/// Coordinate network `(x, t) -> (q, v)` for a single scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinnConfig {
    pub layers: usize,
    pub width: usize,
    /// Diagrams held fixed in the physics loss; one per equal-length
    /// segment.
    pub fixed_fd: Vec<FdParams>,
    pub units: UnitSystem,
    pub pw: PwConstants,
    pub physics: PhysicsOptions,
    pub seed: u64,
}

impl Default for PinnConfig {
    fn default() -> Self {
        Self {
            layers: 6,
            width: 64,
            fixed_fd: vec![FdParams {
                v_f: 100.0,
                rho_c: 0.025,
                a: 2.0,
            }],
            units: UnitSystem::METRIC,
            pw: PwConstants::default(),
            physics: PhysicsOptions::default(),
            seed: 0,
        }
    }
}

/// Time frame shared by every window of the scenario.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeFrame {
    /// Earliest window anchor (s).
    pub origin: f64,
    /// Covered duration (s).
    pub horizon: f64,
}

#[derive(Clone, Debug)]
pub struct Pinn {
    config: PinnConfig,
    params: ParamSet,
    fitted: Option<(Geometry, TimeFrame)>,
}

impl Pinn {
    pub fn new(config: PinnConfig) -> Result<Self> {
        if config.layers == 0 || config.width == 0 || config.fixed_fd.is_empty() {
            return Err(Error::Config("pinn needs layers, width and at least one diagram".into()));
        }
        for p in &config.fixed_fd {
            p.validate()?;
        }
        let mut init = Init::new(config.seed);
        let mut params = ParamSet::new();
        let mut fan_in = 2;
        for i in 0..config.layers {
            init.dense(&mut params, &format!("pinn.dense{i}"), fan_in, config.width)?;
            fan_in = config.width;
        }
        init.dense(&mut params, "pinn.out", fan_in, 2)?;
        Ok(Self {
            config,
            params,
            fitted: None,
        })
    }

    pub fn config(&self) -> &PinnConfig {
        &self.config
    }

    fn fitted(&self) -> Result<&(Geometry, TimeFrame)> {
        self.fitted.as_ref().ok_or(Error::Untrained)
    }

    /// Trains on every window of one scenario.
    pub fn fit(config: PinnConfig, samples: &[TrainSample], train_config: &TrainConfig) -> Result<(Self, TrainReport)> {
        let mut m = Self::new(config)?;
        let report = train(&mut m, samples, &[], train_config)?;
        Ok((m, report))
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let (geo, frame) = match self.fitted {
            Some((g, f)) => (Some(g), Some(f)),
            None => (None, None),
        };
        let echo = serde_json::json!({ "model": self.config, "frame": frame });
        Ok(Checkpoint::new("pinn", echo, geo, &self.params))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != "pinn" {
            return Err(Error::ConfigMismatch(format!("expected a pinn checkpoint, got {}", ck.kind)));
        }
        let config: PinnConfig = serde_json::from_value(ck.config["model"].clone())
            .map_err(|e| Error::Checkpoint(format!("config echo: {e}")))?;
        let frame: Option<TimeFrame> = serde_json::from_value(ck.config["frame"].clone())
            .map_err(|e| Error::Checkpoint(format!("time frame: {e}")))?;
        let mut m = Self::new(config)?;
        let params = ck.params()?;
        if params.names().ne(m.params.names()) {
            return Err(Error::ConfigMismatch("stored weights do not match the pinn config".into()));
        }
        m.params = params;
        m.fitted = ck.geometry.zip(frame);
        Ok(m)
    }
}

impl FieldModel for Pinn {
    fn prepare(&mut self, train: &[TrainSample]) -> Result<()> {
        let geo = Geometry::fit(train)?;
        let origin = train.iter().map(|s| s.window.t0).fold(f64::INFINITY, f64::min);
        let end = train
            .iter()
            .map(|s| s.window.t0 + s.window.span())
            .fold(f64::NEG_INFINITY, f64::max);
        self.fitted = Some((
            geo,
            TimeFrame {
                origin,
                horizon: end - origin,
            },
        ));
        Ok(())
    }

    fn encode(&self, g: &mut Graph, windows: &[&MeasurementWindow]) -> Result<Vec<Var>> {
        let (_, frame) = self.fitted()?;
        let offsets = windows.iter().map(|w| (w.t0 - frame.origin) / frame.horizon).collect();
        Ok(vec![g.constant(Array::column(offsets))])
    }

    fn decode(&self, g: &mut Graph, enc: &[Var], coords: Var, owner: &[usize]) -> Result<(Var, Var)> {
        let (geo, frame) = self.fitted()?;
        let x = g.slice(coords, 1, 0, 1)?;
        let t = g.slice(coords, 1, 1, 1)?;
        let t = g.scale(t, geo.span / frame.horizon)?;
        let off = g.gather_rows(enc[0], owner)?;
        let t = g.add(t, off)?;
        let mut h = g.concat(&[x, t], 1)?;
        for i in 0..self.config.layers {
            h = dense(g, &self.params, &format!("pinn.dense{i}"), h, true)?;
        }
        let out = dense(g, &self.params, "pinn.out", h, false)?;
        let v = g.slice(out, 1, 0, 1)?;
        let q = g.slice(out, 1, 1, 1)?;
        Ok((q, v))
    }

    fn fd_params(&self, g: &mut Graph, _enc: &[Var], xs: &[f64], _owner: &[usize]) -> Result<FdNodes> {
        let n = self.config.fixed_fd.len();
        let seg: Vec<usize> = xs.iter().map(|&x| segment_of(x, n)).collect();
        FdNodes::constant(g, &self.config.fixed_fd, &seg, &self.config.units)
    }

    fn learns_fd(&self) -> bool {
        false
    }

    fn physics_context(&self) -> Result<PhysicsContext> {
        let (geo, _) = self.fitted()?;
        Ok(PhysicsContext {
            length: geo.length,
            span: geo.span,
            stats: geo.stats,
            units: self.config.units,
            pw: self.config.pw,
            options: self.config.physics,
        })
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

impl Estimator for Pinn {
    fn name(&self) -> String {
        "pinn".into()
    }

    fn estimate(&self, window: &MeasurementWindow, lattice: &Lattice) -> Result<EstimateField> {
        let (geo, _) = self.fitted()?;
        let stats = geo.stats;
        let mut g = Graph::new(0);
        let enc = self.encode(&mut g, &[window])?;
        let pts = lattice.points();
        let flat = pts.iter().flat_map(|p| [p.x, p.t]).collect();
        let y = g.constant(Array::matrix(pts.len(), 2, flat)?);
        let (q, v) = self.decode(&mut g, &enc, y, &vec![0; pts.len()])?;
        EstimateField::new(
            self.config.units,
            lattice.clone(),
            g.value(v).data().iter().map(|&x| stats.denorm_speed(x).max(0.0)).collect(),
            g.value(q).data().iter().map(|&x| stats.denorm_flow(x).max(0.0)).collect(),
        )
    }
}

/// Trains a coordinate network on `samples` and evaluates it on `lattice`
/// over `window`.
pub fn pinn_train_estimate(
    samples: &[TrainSample],
    config: PinnConfig,
    train_config: &TrainConfig,
    window: &MeasurementWindow,
    lattice: &Lattice,
) -> Result<EstimateField> {
    let (m, _) = Pinn::fit(config, samples, train_config)?;
    m.estimate(window, lattice)
}
