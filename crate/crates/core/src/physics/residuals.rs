use serde::{Deserialize, Serialize};

use super::fd::{fd_speed, FdNodes, PwConstants};
use crate::autodiff::{Array, Graph, Var};
use crate::data::{NormStats, UnitSystem};
use crate::error::Result;

/// Guards and weights applied when forming residuals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsOptions {
    /// Lower bound on flow, as a multiple of the flow standard deviation.
    pub q_floor: f64,
    /// Lower bound on speed, in speed units.
    pub v_floor: f64,
    /// Multipliers applied to `f1` and `f2` before squaring in the loss.
    pub residual_scale: [f64; 2],
}

impl Default for PhysicsOptions {
    fn default() -> Self {
        Self {
            q_floor: 1e-3,
            v_floor: 0.1,
            residual_scale: [1.0, 1.0],
        }
    }
}

/// Everything needed to turn normalized network outputs over the unit
/// square into physical residuals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicsContext {
    /// Physical extent of normalized x (length units).
    pub length: f64,
    /// Physical extent of normalized t (seconds).
    pub span: f64,
    pub stats: NormStats,
    pub units: UnitSystem,
    pub pw: PwConstants,
    pub options: PhysicsOptions,
}

impl PhysicsContext {
    pub(crate) fn flow_scale(&self) -> f64 {
        self.stats.flow_std * self.units.flow_to_base()
    }

    pub(crate) fn speed_scale(&self) -> f64 {
        self.stats.speed_std * self.units.speed_to_base()
    }

    /// Flow floor in veh/s.
    pub(crate) fn q_floor_base(&self) -> f64 {
        self.options.q_floor * self.flow_scale()
    }

    /// Speed floor in length-unit/s.
    pub(crate) fn v_floor_base(&self) -> f64 {
        self.options.v_floor * self.units.speed_to_base()
    }

    /// Normalized flow node to veh/s.
    pub fn flow_to_base(&self, g: &mut Graph, q_hat: Var) -> Result<Var> {
        let k = self.units.flow_to_base();
        let q = g.scale(q_hat, self.stats.flow_std * k)?;
        g.add_scalar(q, self.stats.flow_mean * k)
    }

    /// Normalized speed node to length-unit/s.
    pub fn speed_to_base(&self, g: &mut Graph, v_hat: Var) -> Result<Var> {
        let k = self.units.speed_to_base();
        let v = g.scale(v_hat, self.stats.speed_std * k)?;
        g.add_scalar(v, self.stats.speed_mean * k)
    }
}

/// Conservation (`f1`) and momentum (`f2`) residuals, one row per point.
#[derive(Clone, Copy, Debug)]
pub struct ResidualPair {
    pub f1: Var,
    pub f2: Var,
    /// Points whose speed estimate fell below the floor.
    pub clamped: usize,
}

/// Coordinate input `[M, 2]` seeded with the x basis on direction 0 and the
/// t basis on direction 1.
pub fn coordinate_input(g: &mut Graph, coords: Array) -> Result<Var> {
    let n = coords.len();
    let ex = Array::new(coords.shape(), (0..n).map(|i| ((i % 2) == 0) as u8 as f64).collect())?;
    let et = Array::new(coords.shape(), (0..n).map(|i| ((i % 2) == 1) as u8 as f64).collect())?;
    g.input(coords, vec![Some(ex), Some(et)])
}

/// Residuals of the second-order model at the points carried by `q_hat`,
/// `v_hat` (normalized outputs whose tangents along directions 0 and 1 are
/// derivatives with respect to normalized x and t).
///
/// With `rho = q / v` and `F` the fundamental diagram under `fd`:
/// `f1 = rho_t + q_x`,
/// `f2 = v_t + v v_x + (c v / q) rho_x + (v - F(rho)) / tau`.
pub fn pw_residuals(
    g: &mut Graph,
    q_hat: Var,
    v_hat: Var,
    fd: &FdNodes,
    ctx: &PhysicsContext,
) -> Result<ResidualPair> {
    let q = ctx.flow_to_base(g, q_hat)?;
    let v = ctx.speed_to_base(g, v_hat)?;
    let v_floor = ctx.v_floor_base();
    let clamped = g.value(v).data().iter().filter(|x| **x < v_floor).count();
    let q = g.max_const(q, ctx.q_floor_base())?;
    let v = g.max_const(v, v_floor)?;
    let rho = g.div(q, v)?;

    let (sx, st) = (1.0 / ctx.length, 1.0 / ctx.span);
    let d = |g: &mut Graph, node: Var, dir: usize, s: f64| -> Result<Var> {
        let t = g.tangent(node, dir);
        g.scale(t, s)
    };
    let rho_t = d(g, rho, 1, st)?;
    let q_x = d(g, q, 0, sx)?;
    let f1 = g.add(rho_t, q_x)?;

    let v_t = d(g, v, 1, st)?;
    let v_x = d(g, v, 0, sx)?;
    let rho_x = d(g, rho, 0, sx)?;
    let convect = g.mul(v, v_x)?;
    let v_over_q = g.div(v, q)?;
    let coef = g.scale(v_over_q, ctx.pw.c)?;
    let pressure = g.mul(coef, rho_x)?;
    let eq = fd_speed(g, rho, fd)?;
    let gap = g.sub(v, eq)?;
    let relax = g.scale(gap, 1.0 / ctx.pw.tau)?;
    let f2 = g.add(v_t, convect)?;
    let f2 = g.add(f2, pressure)?;
    let f2 = g.add(f2, relax)?;
    Ok(ResidualPair { f1, f2, clamped })
}
