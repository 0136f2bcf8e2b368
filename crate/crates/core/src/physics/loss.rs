use serde::{Deserialize, Serialize};

use super::fd::{fd_speed, FdNodes};
use super::residuals::{coordinate_input, pw_residuals, PhysicsContext};
use crate::autodiff::{Array, Graph, ParamSet, Var};
use crate::data::{MeasurementWindow, TrainSample};
use crate::error::{Error, Result};

/// A trainable estimator of normalized `(q, v)` over the unit square of a
/// measurement window.
///
/// The operator networks and the coordinate network both implement this, so
/// every loss below is shared between them.
pub trait FieldModel {
    /// Fits normalization statistics and geometry to a training split.
    fn prepare(&mut self, train: &[TrainSample]) -> Result<()>;

    /// Per-batch encoding of the measurement windows, passed back into
    /// [`FieldModel::decode`] and [`FieldModel::fd_params`].
    fn encode(&self, g: &mut Graph, windows: &[&MeasurementWindow]) -> Result<Vec<Var>>;

    /// Normalized `(q_hat, v_hat)`, each `[M, 1]`, at `coords: [M, 2]`; row
    /// `m` belongs to window `owner[m]` of the encoded batch.
    fn decode(&self, g: &mut Graph, enc: &[Var], coords: Var, owner: &[usize])
        -> Result<(Var, Var)>;

    /// Fundamental-diagram parameters (base units) at normalized positions.
    fn fd_params(&self, g: &mut Graph, enc: &[Var], xs: &[f64], owner: &[usize])
        -> Result<FdNodes>;

    /// Whether the diagram parameters are learned (enables the parameter
    /// loss).
    fn learns_fd(&self) -> bool;

    fn physics_context(&self) -> Result<PhysicsContext>;

    fn params(&self) -> &ParamSet;

    fn params_mut(&mut self) -> &mut ParamSet;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.alpha1, self.alpha2, self.alpha3];
        if w.iter().any(|a| !(a.is_finite() && *a >= 0.0)) || w.iter().all(|a| *a == 0.0) {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be nonnegative and not all zero, got {w:?}"
            )));
        }
        Ok(())
    }
}

/// Scalar loss nodes of one batch.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub data: Var,
    pub physics: Var,
    pub parameter: Var,
    pub total: Var,
    /// Collocation points whose speed estimate hit the floor.
    pub clamped: usize,
}

fn zero(g: &mut Graph) -> Var {
    g.constant(Array::scalar(0.0))
}

/// Mean of `f1^2 + f2^2` (after the configured residual scaling) over every
/// collocation point of the batch; zero when there are none.
pub fn physics_loss(
    g: &mut Graph,
    model: &dyn FieldModel,
    enc: &[Var],
    batch: &[&TrainSample],
) -> Result<(Var, usize)> {
    let mut coords = Vec::new();
    let mut owner = Vec::new();
    let mut xs = Vec::new();
    for (i, s) in batch.iter().enumerate() {
        for c in &s.collocation {
            coords.extend([c.x, c.t]);
            owner.push(i);
            xs.push(c.x);
        }
    }
    if owner.is_empty() {
        return Ok((zero(g), 0));
    }
    let ctx = model.physics_context()?;
    let y = coordinate_input(g, Array::matrix(owner.len(), 2, coords)?)?;
    let (q_hat, v_hat) = model.decode(g, enc, y, &owner)?;
    let fd = model.fd_params(g, enc, &xs, &owner)?;
    let r = pw_residuals(g, q_hat, v_hat, &fd, &ctx)?;
    let [s1, s2] = ctx.options.residual_scale;
    let f1 = g.scale(r.f1, s1)?;
    let f2 = g.scale(r.f2, s2)?;
    let a = g.square(f1)?;
    let b = g.square(f2)?;
    let sum = g.add(a, b)?;
    Ok((g.mean(sum)?, r.clamped))
}

fn observed_rows(batch: &[&TrainSample]) -> (Vec<f64>, Vec<usize>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let (mut coords, mut owner, mut xs, mut q, mut v) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, s) in batch.iter().enumerate() {
        for p in &s.observed {
            coords.extend([p.coord.x, p.coord.t]);
            owner.push(i);
            xs.push(p.coord.x);
            q.push(p.flow);
            v.push(p.speed);
        }
    }
    (coords, owner, xs, q, v)
}

/// Mean over observed points of `(q_hat - q)^2 + (v_hat - v)^2` in
/// normalized units.
pub fn data_loss(
    g: &mut Graph,
    model: &dyn FieldModel,
    enc: &[Var],
    batch: &[&TrainSample],
) -> Result<Var> {
    let (coords, owner, _, q, v) = observed_rows(batch);
    if owner.is_empty() {
        return Err(Error::InsufficientData("batch has no observed points".into()));
    }
    let stats = model.physics_context()?.stats;
    let y = g.constant(Array::matrix(owner.len(), 2, coords)?);
    let (q_hat, v_hat) = model.decode(g, enc, y, &owner)?;
    let tq = g.constant(Array::column(q.iter().map(|&x| stats.norm_flow(x)).collect()));
    let tv = g.constant(Array::column(v.iter().map(|&x| stats.norm_speed(x)).collect()));
    let dq = g.sub(q_hat, tq)?;
    let dv = g.sub(v_hat, tv)?;
    let a = g.square(dq)?;
    let b = g.square(dv)?;
    let sum = g.add(a, b)?;
    g.mean(sum)
}

/// Mean over observed points of `((v - F(q / v)) / sigma_v)^2`, with the
/// diagram taken from the model at each point's position.
pub fn parameter_loss(
    g: &mut Graph,
    model: &dyn FieldModel,
    enc: &[Var],
    batch: &[&TrainSample],
) -> Result<Var> {
    let (_, owner, xs, q, v) = observed_rows(batch);
    if owner.is_empty() {
        return Err(Error::InsufficientData("batch has no observed points".into()));
    }
    if let Some(&bad) = v.iter().find(|x| !(**x > 0.0)) {
        return Err(Error::NonPositiveSpeed(bad));
    }
    let ctx = model.physics_context()?;
    let (kq, kv) = (ctx.units.flow_to_base(), ctx.units.speed_to_base());
    let q_floor = ctx.q_floor_base();
    let rho: Vec<f64> = q
        .iter()
        .zip(&v)
        .map(|(&q, &v)| (q * kq).max(q_floor) / (v * kv))
        .collect();
    let rho = g.constant(Array::column(rho));
    let fd = model.fd_params(g, enc, &xs, &owner)?;
    let eq = fd_speed(g, rho, &fd)?;
    let vb = g.constant(Array::column(v.iter().map(|&x| x * kv).collect()));
    let gap = g.sub(vb, eq)?;
    let gap = g.scale(gap, 1.0 / ctx.speed_scale())?;
    let sq = g.square(gap)?;
    g.mean(sq)
}

/// `alpha1 data + alpha2 physics + alpha3 parameter`; the parameter term is
/// zero for models with fixed diagrams.
pub fn total_loss(
    g: &mut Graph,
    model: &dyn FieldModel,
    batch: &[&TrainSample],
    weights: &LossWeights,
) -> Result<LossTerms> {
    let windows: Vec<&MeasurementWindow> = batch.iter().map(|s| &s.window).collect();
    let enc = model.encode(g, &windows)?;
    let data = data_loss(g, model, &enc, batch)?;
    let (physics, clamped) = physics_loss(g, model, &enc, batch)?;
    let parameter = if model.learns_fd() {
        parameter_loss(g, model, &enc, batch)?
    } else {
        zero(g)
    };
    let a = g.scale(data, weights.alpha1)?;
    let b = g.scale(physics, weights.alpha2)?;
    let c = g.scale(parameter, weights.alpha3)?;
    let total = g.add(a, b)?;
    let total = g.add(total, c)?;
    Ok(LossTerms {
        data,
        physics,
        parameter,
        total,
        clamped,
    })
}
