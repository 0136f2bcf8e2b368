use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::layers::{conv_tanh, dense, Init};
use crate::autodiff::{Array, Graph, ParamSet, Var};
use crate::data::{EstimateField, Lattice, MeasurementWindow, NormStats, TrainSample};
use crate::error::{Error, Result};
use crate::physics::{segment_of, FdNodes, FdParams, FieldModel, PhysicsContext};

/// Normalization and physical extent fitted on a training split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub stats: NormStats,
    /// Stretch length (length units).
    pub length: f64,
    /// Window duration `T` (s).
    pub span: f64,
}

impl Geometry {
    /// Statistics and extents of `train`, which must share one window shape.
    pub fn fit(train: &[TrainSample]) -> Result<Self> {
        let first = train
            .first()
            .ok_or_else(|| Error::InsufficientData("empty training split".into()))?;
        let (length, span) = (first.window.length, first.window.span());
        for s in train {
            let w = &s.window;
            if w.rows != first.window.rows || w.cols != first.window.cols {
                return Err(Error::ShapeMismatch {
                    op: "training windows",
                    lhs: vec![first.window.rows, first.window.cols],
                    rhs: vec![w.rows, w.cols],
                });
            }
            if w.length != length || (w.span() - span).abs() > 1e-9 * span {
                return Err(Error::InvalidArgument("training windows differ in extent".into()));
            }
        }
        Ok(Self {
            stats: NormStats::from_samples(train)?,
            length,
            span,
        })
    }
}

/// The two measurement branches of the MIMO composition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Speed,
    Flow,
}

impl Branch {
    fn prefix(self) -> &'static str {
        match self {
            Branch::Speed => "branch_v",
            Branch::Flow => "branch_q",
        }
    }
}

const PARAM_NET: &str = "param";

/// Operator network mapping a measurement window and query coordinates to
/// normalized `(q, v)`, with an optional network for per-segment diagrams.
#[derive(Clone, Debug)]
pub struct ExtendedModel {
    config: ModelConfig,
    params: ParamSet,
    geometry: Option<Geometry>,
}

/// `[cos x, cos t, sin x, sin t, exp x, exp t, x, t]` for each row of
/// `y: [M, 2]`.
pub fn nonlinear_expand(g: &mut Graph, y: Var) -> Result<Var> {
    let x = g.slice(y, 1, 0, 1)?;
    let t = g.slice(y, 1, 1, 1)?;
    let parts = [
        g.cos(x)?,
        g.cos(t)?,
        g.sin(x)?,
        g.sin(t)?,
        g.exp(x)?,
        g.exp(t)?,
        x,
        t,
    ];
    g.concat(&parts, 1)
}

/// Combines gathered branch outputs `bv, bq: [M, 2K]` with trunk features
/// `t: [M, K]` into `(v_hat, q_hat)`, each `[M, 1]`.
///
/// The first `K` branch features weight the speed output, the second `K`
/// the flow output; both branches contribute to both outputs.
pub fn mimo_combine(g: &mut Graph, bv: Var, bq: Var, t: Var) -> Result<(Var, Var)> {
    let k = g.shape(t)[1];
    if g.shape(bv) != g.shape(bq) || g.shape(bv)[1] != 2 * k {
        return Err(Error::ShapeMismatch {
            op: "mimo",
            lhs: g.shape(bv).to_vec(),
            rhs: g.shape(t).to_vec(),
        });
    }
    let s = g.add(bv, bq)?;
    let sv = g.slice(s, 1, 0, k)?;
    let sq = g.slice(s, 1, k, k)?;
    let pv = g.mul(sv, t)?;
    let pq = g.mul(sq, t)?;
    Ok((g.sum_axis(pv, 1)?, g.sum_axis(pq, 1)?))
}

impl ExtendedModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut init = Init::new(config.seed);
        let mut params = ParamSet::new();
        let k = config.k;
        for b in [Branch::Speed, Branch::Flow] {
            build_encoder(&config, &mut init, &mut params, b.prefix(), 1, 2 * k)?;
        }
        let w = config.trunk_width;
        if config.variant.attention {
            for name in ["trunk.u", "trunk.v", "trunk.h"] {
                init.dense(&mut params, name, 8, w)?;
            }
            for l in 0..config.trunk_layers {
                init.dense(&mut params, &format!("trunk.gate{l}"), w, w)?;
            }
        } else {
            init.dense(&mut params, "trunk.in", 2, w)?;
            for l in 1..config.trunk_layers {
                init.dense(&mut params, &format!("trunk.hidden{l}"), w, w)?;
            }
        }
        init.dense(&mut params, "trunk.out", w, k)?;
        if config.variant.param_net {
            build_encoder(&config, &mut init, &mut params, PARAM_NET, 2, 3 * config.segments)?;
        }
        Ok(Self {
            config,
            params,
            geometry: None,
        })
    }

    pub(crate) fn from_parts(config: ModelConfig, params: ParamSet, geometry: Option<Geometry>) -> Result<Self> {
        let fresh = Self::new(config)?;
        let expected: Vec<(&str, &[usize])> = fresh.params.iter().map(|(n, a)| (n, a.shape())).collect();
        let got: Vec<(&str, &[usize])> = params.iter().map(|(n, a)| (n, a.shape())).collect();
        if expected != got {
            return Err(Error::ConfigMismatch(
                "stored weights do not match the layout implied by the config".into(),
            ));
        }
        Ok(Self {
            config: fresh.config,
            params,
            geometry,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn geometry(&self) -> Option<&Geometry> {
        self.geometry.as_ref()
    }

    pub fn set_geometry(&mut self, geometry: Geometry) {
        self.geometry = Some(geometry);
    }

    fn fitted(&self) -> Result<&Geometry> {
        self.geometry.as_ref().ok_or(Error::Untrained)
    }

    /// Number of convolution kernels across all encoders.
    pub fn conv_layer_count(&self) -> usize {
        self.params.names().filter(|n| n.contains(".conv") && n.ends_with(".w")).count()
    }

    /// Branch output `[N, 2K]` for normalized grids `[N, 1, H, W]`.
    pub fn cbn_forward(&self, g: &mut Graph, branch: Branch, grids: Var) -> Result<Var> {
        self.encoder_forward(g, branch.prefix(), grids)
    }

    fn encoder_forward(&self, g: &mut Graph, prefix: &str, x: Var) -> Result<Var> {
        let c = &self.config;
        let shape = g.shape(x);
        if shape.len() != 4 || shape[2] != c.window || shape[3] != c.sensors {
            return Err(Error::ShapeMismatch {
                op: "encoder input",
                lhs: vec![c.window, c.sensors],
                rhs: shape.to_vec(),
            });
        }
        let mut h = x;
        if c.variant.cnn {
            for i in 0..c.conv_channels.len() {
                h = conv_tanh(g, &self.params, &format!("{prefix}.conv{i}"), h)?;
            }
        }
        h = g.flatten(h)?;
        for i in 0..c.head.len() {
            h = dense(g, &self.params, &format!("{prefix}.dense{i}"), h, true)?;
        }
        dense(g, &self.params, &format!("{prefix}.out"), h, false)
    }

    /// Trunk features `[M, K]` at coordinates `[M, 2]`.
    pub fn trunk_forward(&self, g: &mut Graph, coords: Var) -> Result<Var> {
        let c = &self.config;
        let p = &self.params;
        let h = if c.variant.attention {
            let z0 = nonlinear_expand(g, coords)?;
            let u = dense(g, p, "trunk.u", z0, true)?;
            let v = dense(g, p, "trunk.v", z0, true)?;
            let mut h = dense(g, p, "trunk.h", z0, true)?;
            let gap = g.sub(v, u)?;
            for l in 0..c.trunk_layers {
                let z = dense(g, p, &format!("trunk.gate{l}"), h, true)?;
                let zg = g.mul(z, gap)?;
                h = g.add(u, zg)?;
            }
            h
        } else {
            let mut h = dense(g, p, "trunk.in", coords, true)?;
            for l in 1..c.trunk_layers {
                h = dense(g, p, &format!("trunk.hidden{l}"), h, true)?;
            }
            h
        };
        dense(g, p, "trunk.out", h, true)
    }

    fn grids(&self, windows: &[&MeasurementWindow], stats: &NormStats) -> Result<(Array, Array)> {
        let c = &self.config;
        let cells = c.window * c.sensors;
        let (mut v, mut q) = (Vec::with_capacity(windows.len() * cells), Vec::new());
        for w in windows {
            if w.rows != c.window || w.cols != c.sensors {
                return Err(Error::ShapeMismatch {
                    op: "measurement window",
                    lhs: vec![c.window, c.sensors],
                    rhs: vec![w.rows, w.cols],
                });
            }
            v.extend(w.speed.iter().map(|&x| stats.norm_speed(x)));
            q.extend(w.flow.iter().map(|&x| stats.norm_flow(x)));
        }
        let shape = [windows.len(), 1, c.window, c.sensors];
        Ok((Array::new(&shape, v)?, Array::new(&shape, q)?))
    }

    /// Diagram parameters `[N, 3C]` in base units, grouped by component
    /// (`v_f` block, then `rho_c`, then `a`).
    fn param_forward(&self, g: &mut Graph, v: Var, q: Var) -> Result<Var> {
        let c = &self.config;
        let stack = g.concat(&[v, q], 1)?;
        let raw = self.encoder_forward(g, PARAM_NET, stack)?;
        let s = g.sigmoid(raw)?;
        let n = c.segments;
        let mut blocks = Vec::with_capacity(3);
        for (i, [lo, hi]) in c.ranges.as_rows().into_iter().enumerate() {
            let unit = if i == 0 { c.units.speed_to_base() } else { 1.0 };
            let b = g.slice(s, 1, i * n, n)?;
            let b = g.scale(b, (hi - lo) * unit)?;
            blocks.push(g.add_scalar(b, lo * unit)?);
        }
        g.concat(&blocks, 1)
    }

    /// Per-segment diagrams, in the model's units, for one window.
    pub fn param_net_forward(&self, window: &MeasurementWindow) -> Result<Vec<FdParams>> {
        let c = &self.config;
        if !c.variant.param_net {
            return Ok(self.config.fixed_fd.clone());
        }
        let stats = self.fitted()?.stats;
        let mut g = Graph::new(0);
        let (v, q) = self.grids(&[window], &stats)?;
        let (v, q) = (g.constant(v), g.constant(q));
        let p = self.param_forward(&mut g, v, q)?;
        let d = g.value(p).data();
        let n = c.segments;
        let k = c.units.speed_to_base();
        Ok((0..n)
            .map(|s| FdParams {
                v_f: d[s] / k,
                rho_c: d[n + s],
                a: d[2 * n + s],
            })
            .collect())
    }

    /// Denormalized, nonnegative estimates over `lattice` for one window.
    pub fn estimate_field(&self, window: &MeasurementWindow, lattice: &Lattice) -> Result<EstimateField> {
        let stats = self.fitted()?.stats;
        let (v, q) = self.predict(window, &lattice.points().iter().map(|p| [p.x, p.t]).collect::<Vec<_>>())?;
        EstimateField::new(
            self.config.units,
            lattice.clone(),
            v.iter().map(|&x| stats.denorm_speed(x).max(0.0)).collect(),
            q.iter().map(|&x| stats.denorm_flow(x).max(0.0)).collect(),
        )
    }

    /// Normalized `(v_hat, q_hat)` at raw coordinates.
    pub fn predict(&self, window: &MeasurementWindow, coords: &[[f64; 2]]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut g = Graph::new(0);
        let enc = self.encode(&mut g, &[window])?;
        let flat: Vec<f64> = coords.iter().flatten().copied().collect();
        let y = g.constant(Array::matrix(coords.len(), 2, flat)?);
        let (q, v) = self.decode(&mut g, &enc, y, &vec![0; coords.len()])?;
        Ok((g.value(v).data().to_vec(), g.value(q).data().to_vec()))
    }
}

fn build_encoder(
    config: &ModelConfig,
    init: &mut Init,
    params: &mut ParamSet,
    prefix: &str,
    channels: usize,
    out: usize,
) -> Result<()> {
    let mut width = channels * config.window * config.sensors;
    if config.variant.cnn {
        let (layers, flat, _) = config.conv_plan(channels);
        for (i, l) in layers.iter().enumerate() {
            init.conv(params, &format!("{prefix}.conv{i}"), l)?;
        }
        width = flat;
    }
    for (i, &h) in config.head.iter().enumerate() {
        init.dense(params, &format!("{prefix}.dense{i}"), width, h)?;
        width = h;
    }
    init.dense(params, &format!("{prefix}.out"), width, out)
}

impl FieldModel for ExtendedModel {
    fn prepare(&mut self, train: &[TrainSample]) -> Result<()> {
        let geometry = Geometry::fit(train)?;
        let w = &train[0].window;
        if w.rows != self.config.window || w.cols != self.config.sensors {
            return Err(Error::ConfigMismatch(format!(
                "model expects {}x{} windows, data has {}x{}",
                self.config.window, self.config.sensors, w.rows, w.cols
            )));
        }
        self.geometry = Some(geometry);
        Ok(())
    }

    fn encode(&self, g: &mut Graph, windows: &[&MeasurementWindow]) -> Result<Vec<Var>> {
        let stats = self.fitted()?.stats;
        let (v, q) = self.grids(windows, &stats)?;
        let (v, q) = (g.constant(v), g.constant(q));
        let mut enc = vec![
            self.cbn_forward(g, Branch::Speed, v)?,
            self.cbn_forward(g, Branch::Flow, q)?,
        ];
        if self.config.variant.param_net {
            enc.push(self.param_forward(g, v, q)?);
        }
        Ok(enc)
    }

    fn decode(&self, g: &mut Graph, enc: &[Var], coords: Var, owner: &[usize]) -> Result<(Var, Var)> {
        let bv = g.gather_rows(enc[0], owner)?;
        let bq = g.gather_rows(enc[1], owner)?;
        let t = self.trunk_forward(g, coords)?;
        let (v, q) = mimo_combine(g, bv, bq, t)?;
        Ok((q, v))
    }

    fn fd_params(&self, g: &mut Graph, enc: &[Var], xs: &[f64], owner: &[usize]) -> Result<FdNodes> {
        let c = &self.config;
        if !c.variant.param_net {
            let n = c.fixed_fd.len();
            let seg: Vec<usize> = xs.iter().map(|&x| segment_of(x, n)).collect();
            return FdNodes::constant(g, &c.fixed_fd, &seg, &c.units);
        }
        let n = c.segments;
        let p = g.gather_rows(enc[2], owner)?;
        let mut mask = vec![0.0; xs.len() * n];
        for (m, &x) in xs.iter().enumerate() {
            mask[m * n + segment_of(x, n)] = 1.0;
        }
        let mask = g.constant(Array::matrix(xs.len(), n, mask)?);
        let mut pick = |i: usize| -> Result<Var> {
            let b = g.slice(p, 1, i * n, n)?;
            let b = g.mul(b, mask)?;
            g.sum_axis(b, 1)
        };
        Ok(FdNodes {
            v_f: pick(0)?,
            rho_c: pick(1)?,
            a: pick(2)?,
        })
    }

    fn learns_fd(&self) -> bool {
        self.config.variant.param_net
    }

    fn physics_context(&self) -> Result<PhysicsContext> {
        let geo = self.fitted()?;
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
