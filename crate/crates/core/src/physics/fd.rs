use serde::{Deserialize, Serialize};

use crate::autodiff::{Array, Graph, Var};
use crate::data::UnitSystem;
use crate::error::{Error, Result};

/// Exponential fundamental diagram `F(rho) = v_f exp(-(rho/rho_c)^a / a)`.
///
/// `v_f` is in the data set's speed unit, `rho_c` in vehicles per length
/// unit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdParams {
    pub v_f: f64,
    pub rho_c: f64,
    pub a: f64,
}

impl FdParams {
    pub const A_RANGE: (f64, f64) = (0.5, 4.0);

    pub fn new(v_f: f64, rho_c: f64, a: f64) -> Result<Self> {
        let p = Self { v_f, rho_c, a };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.v_f.is_finite()
            && self.v_f > 0.0
            && self.rho_c.is_finite()
            && self.rho_c > 0.0
            && (Self::A_RANGE.0..=Self::A_RANGE.1).contains(&self.a);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid fundamental diagram {self:?}: need v_f > 0, rho_c > 0, a in [0.5, 4]"
            )))
        }
    }

    /// Same diagram with `v_f` expressed in length-unit/s.
    pub fn to_base(&self, units: &UnitSystem) -> FdParams {
        FdParams {
            v_f: self.v_f * units.speed_to_base(),
            ..*self
        }
    }

    /// Equilibrium speed, in the unit of `v_f`.
    pub fn speed(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::NonPositiveDensity(rho));
        }
        Ok(self.speed_unchecked(rho))
    }

    pub(crate) fn speed_unchecked(&self, rho: f64) -> f64 {
        self.v_f * (-(rho / self.rho_c).powf(self.a) / self.a).exp()
    }

    /// Equilibrium flow `rho F(rho)`.
    pub fn flow(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            0.0
        } else {
            rho * self.speed_unchecked(rho)
        }
    }

    /// Maximum of `rho F(rho)`, attained at `rho_c`.
    pub fn capacity(&self) -> f64 {
        self.rho_c * self.v_f * (-1.0 / self.a).exp()
    }

    /// Density whose equilibrium speed is `v`; `None` when `v >= v_f`.
    pub fn density_for_speed(&self, v: f64) -> Option<f64> {
        if !(v > 0.0 && v < self.v_f) {
            return None;
        }
        Some(self.rho_c * (-self.a * (v / self.v_f).ln()).powf(1.0 / self.a))
    }

    /// Uncongested density carrying flow `q`; `None` above capacity.
    pub fn free_density_for_flow(&self, q: f64) -> Option<f64> {
        if q < 0.0 || q > self.capacity() {
            return None;
        }
        if q == 0.0 {
            return Some(0.0);
        }
        let (mut lo, mut hi) = (0.0, self.rho_c);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.flow(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

/// Per-point diagram parameters as graph nodes of shape `[M, 1]`, with
/// `v_f` in length-unit/s.
#[derive(Clone, Copy, Debug)]
pub struct FdNodes {
    pub v_f: Var,
    pub rho_c: Var,
    pub a: Var,
}

impl FdNodes {
    /// Constant nodes holding `params[segment[m]]` on row `m`.
    pub fn constant(
        g: &mut Graph,
        params: &[FdParams],
        segment: &[usize],
        units: &UnitSystem,
    ) -> Result<FdNodes> {
        let pick = |f: &dyn Fn(&FdParams) -> f64| -> Result<Array> {
            let col: Vec<f64> = segment
                .iter()
                .map(|&s| {
                    params
                        .get(s)
                        .map(|p| f(&p.to_base(units)))
                        .ok_or_else(|| Error::InvalidArgument(format!("no parameters for segment {s}")))
                })
                .collect::<Result<_>>()?;
            Ok(Array::column(col))
        };
        Ok(FdNodes {
            v_f: g.constant(pick(&|p| p.v_f)?),
            rho_c: g.constant(pick(&|p| p.rho_c)?),
            a: g.constant(pick(&|p| p.a)?),
        })
    }
}

/// Segment owning normalized position `x` when the stretch is cut into
/// `count` equal parts.
pub fn segment_of(x: f64, count: usize) -> usize {
    ((x * count as f64).floor().max(0.0) as usize).min(count - 1)
}

/// `F(rho)` on graph nodes; differentiable in `rho` and in every parameter.
pub fn fd_speed(g: &mut Graph, rho: Var, p: &FdNodes) -> Result<Var> {
    if let Some(&bad) = g.value(rho).data().iter().find(|r| !(**r > 0.0)) {
        return Err(Error::NonPositiveDensity(bad));
    }
    let r = g.div(rho, p.rho_c)?;
    let lr = g.ln(r)?;
    let alr = g.mul(p.a, lr)?;
    let pow = g.exp(alr)?;
    let e = g.div(pow, p.a)?;
    let e = g.neg(e)?;
    let e = g.exp(e)?;
    g.mul(p.v_f, e)
}

/// Relaxation time and anticipation coefficient of the momentum equation.
///
/// `tau` is in seconds and `c` in squared base speed units
/// ((length-unit/s)^2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PwConstants {
    pub tau: f64,
    pub c: f64,
}

impl Default for PwConstants {
    fn default() -> Self {
        Self { tau: 18.0, c: 40.0 }
    }
}

impl PwConstants {
    pub fn validate(&self) -> Result<()> {
        if self.tau > 0.0 && self.c > 0.0 && self.tau.is_finite() && self.c.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "tau and c must be positive, got {self:?}"
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let p = FdParams::new(100.0, 0.03, 1.0).unwrap();
        assert!((p.speed(1e-12).unwrap() - 100.0).abs() < 1e-6);
        assert!((p.speed(0.03).unwrap() - 100.0 * (-1.0f64).exp()).abs() < 1e-12);
        assert!(p.speed(0.0).is_err());
        assert!(FdParams::new(100.0, 0.03, 5.0).is_err());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let p = FdParams::new(90.0, 0.025, 2.3).unwrap();
        let mut g = Graph::new(1);
        let rho = g
            .input(Array::column(vec![p.rho_c]), vec![Some(Array::column(vec![1.0]))])
            .unwrap();
        let nodes = FdNodes::constant(&mut g, &[p], &[0], &UnitSystem::NGSIM).unwrap();
        let v = fd_speed(&mut g, rho, &nodes).unwrap();
        let t = g.tangent(v, 0);
        let analytic = g.value(t).item();
        let h = 1e-8;
        let fd = (p.speed(p.rho_c + h).unwrap() - p.speed(p.rho_c - h).unwrap()) / (2.0 * h);
        assert!(((analytic - fd) / fd).abs() < 1e-6, "{analytic} vs {fd}");
        assert!((g.value(v).item() - p.speed(p.rho_c).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn inverses_and_capacity() {
        let p = FdParams::new(30.0, 0.03, 1.7).unwrap();
        let rho = 0.05;
        let v = p.speed(rho).unwrap();
        assert!((p.density_for_speed(v).unwrap() - rho).abs() < 1e-12);
        let q = p.flow(0.01);
        assert!((p.free_density_for_flow(q).unwrap() - 0.01).abs() < 1e-12);
        assert!(p.free_density_for_flow(p.capacity() * 1.01).is_none());
        let eps = 1e-6;
        assert!(p.flow(p.rho_c) > p.flow(p.rho_c + eps));
        assert!(p.flow(p.rho_c) > p.flow(p.rho_c - eps));
    }

    #[test]
    fn segments_partition_the_stretch() {
        assert_eq!(segment_of(0.0, 4), 0);
        assert_eq!(segment_of(0.2499, 4), 0);
        assert_eq!(segment_of(0.25, 4), 1);
        assert_eq!(segment_of(1.0, 4), 3);
        assert_eq!(segment_of(0.7, 1), 0);
    }
}
