use super::config::{BoundaryKind, InitialState, ScenarioConfig};
use crate::data::GroundTruthField;
use crate::error::{Error, Result};
use crate::physics::{segment_of, FdParams};

/// Densities below this are treated as an empty road (veh per length unit).
const RHO_MIN: f64 = 1e-6;

/// Book-keeping of a simulation run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimStats {
    pub steps: usize,
    /// Vehicles on the stretch at the start and end.
    pub mass_initial: f64,
    pub mass_final: f64,
    /// Vehicles that crossed the upstream and downstream ends.
    pub inflow: f64,
    pub outflow: f64,
    /// Number of state values changed by the clamping bounds.
    pub clamp_events: usize,
}

impl SimStats {
    /// `|mass change - (in - out)|` relative to the initial mass.
    pub fn conservation_error(&self) -> f64 {
        let residual = (self.mass_final - self.mass_initial) - (self.inflow - self.outflow);
        residual.abs() / self.mass_initial.max(f64::MIN_POSITIVE)
    }
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub field: GroundTruthField,
    pub stats: SimStats,
}

/// Node layout shared by both schemes: node `j` sits at `x = j dx` and
/// represents a cell of width `dx`.
struct Layout {
    n: usize,
    steps: usize,
    record_every: usize,
    /// Diagram per node with `v_f` in length-unit/s.
    fd: Vec<FdParams>,
    kq: f64,
    kv: f64,
}

fn layout(cfg: &ScenarioConfig, limit: f64) -> Result<Layout> {
    cfg.validate()?;
    if cfg.dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt: cfg.dt, limit });
    }
    let n = crate::data::integral_steps(cfg.length, cfg.dx).expect("validated") + 1;
    let steps = crate::data::integral_steps(cfg.horizon, cfg.dt).expect("validated");
    let record_every = crate::data::integral_steps(cfg.output_dt, cfg.dt).expect("validated");
    let c = cfg.segments.len();
    let fd = (0..n)
        .map(|j| cfg.segments[segment_of(j as f64 * cfg.dx / cfg.length, c)].to_base(&cfg.units))
        .collect();
    Ok(Layout {
        n,
        steps,
        record_every,
        fd,
        kq: cfg.units.flow_to_base(),
        kv: cfg.units.speed_to_base(),
    })
}

fn initial_density(cfg: &ScenarioConfig, n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| match cfg.initial {
            InitialState::Uniform { density } => density,
            InitialState::Riemann {
                left_density,
                right_density,
                position,
            } => {
                if (j as f64) * cfg.dx < position {
                    left_density
                } else {
                    right_density
                }
            }
        })
        .collect()
}

fn eq_speed(fd: &FdParams, rho: f64) -> f64 {
    if rho <= 0.0 {
        fd.v_f
    } else {
        fd.speed_unchecked(rho)
    }
}

/// Receiving capacity of a node.
fn supply(fd: &FdParams, rho: f64) -> f64 {
    if rho <= fd.rho_c {
        fd.capacity()
    } else {
        fd.flow(rho)
    }
}

/// Sending capacity of a node.
fn demand(fd: &FdParams, rho: f64) -> f64 {
    if rho >= fd.rho_c {
        fd.capacity()
    } else {
        fd.flow(rho)
    }
}

struct Recorder {
    cols: usize,
    speed: Vec<f64>,
    flow: Vec<f64>,
}

impl Recorder {
    fn push(&mut self, rho: &[f64], v: &[f64], kq: f64, kv: f64) {
        for (r, s) in rho.iter().zip(v) {
            self.speed.push(s / kv);
            self.flow.push(r * s / kq);
        }
    }

    fn finish(self, cfg: &ScenarioConfig) -> Result<GroundTruthField> {
        let rows = self.speed.len() / self.cols;
        GroundTruthField::new(cfg.units, cfg.dx, cfg.output_dt, rows, self.cols, self.speed, self.flow)
    }
}

/// Upstream inflow target (veh/s) given demand, queued vehicles and the
/// first node's supply.
struct Upstream {
    queue: f64,
}

impl Upstream {
    fn target(&mut self, cfg: &ScenarioConfig, t: f64, kq: f64, fd: &FdParams, rho0: f64) -> f64 {
        let wanted = cfg.demand.at(t) * kq;
        let available = wanted + self.queue / cfg.dt;
        let q = available.min(supply(fd, rho0)).min(fd.capacity());
        self.queue = ((available - q) * cfg.dt).max(0.0);
        q
    }
}

/// Second-order model on conserved variables `(rho, rho v)` with a
/// first-order Rusanov flux and explicit relaxation source.
pub fn simulate_pw_detailed(cfg: &ScenarioConfig) -> Result<SimOutput> {
    let lay = layout(cfg, cfg.cfl_limit())?;
    let (n, dx, dt) = (lay.n, cfg.dx, cfg.dt);
    let (c, tau) = (cfg.pw.c, cfg.pw.tau);
    let sc = c.sqrt();
    let v_min = 0.1 * lay.kv;
    let mut rho = initial_density(cfg, n);
    let mut v: Vec<f64> = rho.iter().zip(&lay.fd).map(|(r, f)| eq_speed(f, *r)).collect();
    let mut rec = Recorder {
        cols: n,
        speed: Vec::new(),
        flow: Vec::new(),
    };
    rec.push(&rho, &v, lay.kq, lay.kv);
    let mut stats = SimStats {
        steps: lay.steps,
        mass_initial: rho.iter().sum::<f64>() * dx,
        mass_final: 0.0,
        inflow: 0.0,
        outflow: 0.0,
        clamp_events: 0,
    };
    let mut up = Upstream { queue: 0.0 };
    let mut flux_r = vec![0.0; n + 1];
    let mut flux_y = vec![0.0; n + 1];
    for step in 0..lay.steps {
        let t = step as f64 * dt;
        let (gl, gr) = match cfg.boundary {
            BoundaryKind::Transmissive => ((rho[0], v[0]), (rho[n - 1], v[n - 1])),
            BoundaryKind::Profiles => {
                let fd0 = &lay.fd[0];
                let q_in = up.target(cfg, t, lay.kq, fd0, rho[0]);
                let r_in = fd0.free_density_for_flow(q_in).unwrap_or(fd0.rho_c);
                let left = (r_in, eq_speed(fd0, r_in));
                let fdn = &lay.fd[n - 1];
                let v_out = cfg.downstream_speed.at(t) * lay.kv;
                let r_out = fdn.density_for_speed(v_out).unwrap_or(0.0).min(cfg.jam_density);
                let right = if r_out > rho[n - 1] {
                    (r_out, v_out)
                } else {
                    (rho[n - 1], v[n - 1])
                };
                (left, right)
            }
        };
        for i in 0..=n {
            let (rl, vl) = if i == 0 { gl } else { (rho[i - 1], v[i - 1]) };
            let (rr, vr) = if i == n { gr } else { (rho[i], v[i]) };
            let a = (vl.abs() + sc).max(vr.abs() + sc);
            let (yl, yr) = (rl * vl, rr * vr);
            let fl = (yl, yl * vl + c * rl);
            let fr = (yr, yr * vr + c * rr);
            flux_r[i] = 0.5 * (fl.0 + fr.0) - 0.5 * a * (rr - rl);
            flux_y[i] = 0.5 * (fl.1 + fr.1) - 0.5 * a * (yr - yl);
        }
        stats.inflow += dt * flux_r[0];
        stats.outflow += dt * flux_r[n];
        for j in 0..n {
            let fd = &lay.fd[j];
            let source = rho[j] * (eq_speed(fd, rho[j]) - v[j]) / tau;
            let r_new = rho[j] - dt / dx * (flux_r[j + 1] - flux_r[j]);
            let y_new = rho[j] * v[j] - dt / dx * (flux_y[j + 1] - flux_y[j]) + dt * source;
            if !(r_new.is_finite() && y_new.is_finite()) {
                return Err(Error::BlowUp(step));
            }
            let mut r = r_new;
            if r < RHO_MIN {
                r = RHO_MIN;
                stats.clamp_events += 1;
            } else if r > cfg.jam_density {
                r = cfg.jam_density;
                stats.clamp_events += 1;
            }
            let mut s = if r_new <= RHO_MIN { eq_speed(fd, r) } else { y_new / r_new };
            let v_max = 1.5 * fd.v_f;
            if s < v_min {
                s = v_min;
                stats.clamp_events += 1;
            } else if s > v_max {
                s = v_max;
                stats.clamp_events += 1;
            }
            rho[j] = r;
            v[j] = s;
        }
        if (step + 1) % lay.record_every == 0 {
            rec.push(&rho, &v, lay.kq, lay.kv);
        }
    }
    stats.mass_final = rho.iter().sum::<f64>() * dx;
    Ok(SimOutput {
        field: rec.finish(cfg)?,
        stats,
    })
}

pub fn simulate_pw(cfg: &ScenarioConfig) -> Result<GroundTruthField> {
    simulate_pw_detailed(cfg).map(|o| o.field)
}

/// First-order Godunov scheme for the first-order model with the same
/// per-segment diagrams; speeds are equilibrium speeds.
pub fn simulate_lwr_detailed(cfg: &ScenarioConfig) -> Result<SimOutput> {
    let vmax = cfg
        .segments
        .iter()
        .map(|s| s.v_f * cfg.units.speed_to_base())
        .fold(0.0, f64::max);
    let lay = layout(cfg, cfg.dx / vmax)?;
    let (n, dx, dt) = (lay.n, cfg.dx, cfg.dt);
    let mut rho = initial_density(cfg, n);
    let speeds = |rho: &[f64]| -> Vec<f64> {
        rho.iter().zip(&lay.fd).map(|(r, f)| eq_speed(f, *r)).collect()
    };
    let mut rec = Recorder {
        cols: n,
        speed: Vec::new(),
        flow: Vec::new(),
    };
    rec.push(&rho, &speeds(&rho), lay.kq, lay.kv);
    let mut stats = SimStats {
        steps: lay.steps,
        mass_initial: rho.iter().sum::<f64>() * dx,
        mass_final: 0.0,
        inflow: 0.0,
        outflow: 0.0,
        clamp_events: 0,
    };
    let mut up = Upstream { queue: 0.0 };
    let mut flux = vec![0.0; n + 1];
    for step in 0..lay.steps {
        let t = step as f64 * dt;
        let (fd0, fdn) = (&lay.fd[0], &lay.fd[n - 1]);
        match cfg.boundary {
            BoundaryKind::Transmissive => {
                flux[0] = demand(fd0, rho[0]).min(supply(fd0, rho[0]));
                flux[n] = demand(fdn, rho[n - 1]).min(supply(fdn, rho[n - 1]));
            }
            BoundaryKind::Profiles => {
                flux[0] = up.target(cfg, t, lay.kq, fd0, rho[0]);
                let v_out = cfg.downstream_speed.at(t) * lay.kv;
                let r_out = fdn.density_for_speed(v_out).unwrap_or(0.0).min(cfg.jam_density);
                flux[n] = demand(fdn, rho[n - 1]).min(supply(fdn, r_out));
            }
        }
        for i in 1..n {
            flux[i] = demand(&lay.fd[i - 1], rho[i - 1]).min(supply(&lay.fd[i], rho[i]));
        }
        stats.inflow += dt * flux[0];
        stats.outflow += dt * flux[n];
        for j in 0..n {
            let r = rho[j] - dt / dx * (flux[j + 1] - flux[j]);
            if !r.is_finite() {
                return Err(Error::BlowUp(step));
            }
            rho[j] = r.clamp(0.0, cfg.jam_density);
        }
        if (step + 1) % lay.record_every == 0 {
            rec.push(&rho, &speeds(&rho), lay.kq, lay.kv);
        }
    }
    stats.mass_final = rho.iter().sum::<f64>() * dx;
    Ok(SimOutput {
        field: rec.finish(cfg)?,
        stats,
    })
}

pub fn simulate_lwr_godunov(cfg: &ScenarioConfig) -> Result<GroundTruthField> {
    simulate_lwr_detailed(cfg).map(|o| o.field)
}
