//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
//! criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tse_cli::commands::run_sweep;
use tse_cli::config::RunConfig;
use tse_cli::pipeline::{self, Dataset};
use tse_core::autodiff::{coordinate_derivative, Array, Graph};
use tse_core::baselines::{adaptive_smoothing_estimate, Inter2d};
use tse_core::data::{
    build_samples, GroundTruthField, Lattice, MeasurementWindow, NormStats, SampleSpec, SensorLayout, TrainSample,
    UnitSystem,
};
use tse_core::eval::{evaluate_method, re, rmse, EvalMeta, EvalReport, Estimator, SweepSetup};
use tse_core::nets::{ExtendedModel, ModelConfig, Variant};
use tse_core::physics::{
    coordinate_input, fd_speed, pw_residuals, segment_of, total_loss, FdNodes, FdParams, FieldModel, LossWeights,
    PhysicsContext, PhysicsOptions, PwConstants,
};
use tse_core::sim::{
    simulate_lwr_godunov, simulate_pw, simulate_pw_detailed, BoundaryKind, InitialState, NoiseConfig, Profile,
    ScenarioConfig, SensorConfig,
};
use tse_core::train::TrainReport;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn reference_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml")
}

fn small_scenario() -> ScenarioConfig {
    let fd = FdParams::new(100.0, 0.025, 2.0).unwrap();
    ScenarioConfig {
        id: "small".into(),
        units: UnitSystem::METRIC,
        length: 1000.0,
        horizon: 600.0,
        dx: 50.0,
        dt: 1.0,
        output_dt: 5.0,
        pw: PwConstants::default(),
        jam_density: 0.15,
        segments: vec![fd, FdParams::new(80.0, 0.02, 2.0).unwrap()],
        initial: InitialState::Uniform { density: 0.01 },
        boundary: BoundaryKind::Profiles,
        demand: Profile {
            points: vec![[0.0, 900.0], [200.0, 1800.0], [400.0, 1000.0]],
        },
        downstream_speed: Profile::constant(80.0),
        sensors: SensorConfig {
            inputs: vec![0.0, 200.0, 500.0, 800.0, 1000.0],
            evaluation: vec![100.0, 600.0],
            cadence: 5.0,
        },
        noise: NoiseConfig::default(),
        seed: 3,
    }
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn random_tiny_model(rng: &mut ChaCha8Rng, case: usize, field: &GroundTruthField) -> (ExtendedModel, Vec<TrainSample>) {
    let sensors = rng.random_range(2..=4usize);
    let window = rng.random_range(3..=5usize);
    let inputs: Vec<f64> = (0..sensors).map(|i| 1000.0 * i as f64 / (sensors - 1) as f64).collect();
    let inputs: Vec<f64> = inputs.iter().map(|x| (x / 50.0).round() * 50.0).collect();
    let layout = SensorLayout::from_positions(&inputs, &[], 1000.0).unwrap();
    let spec = SampleSpec {
        window,
        cadence_rows: rng.random_range(1..=2),
        collocation: rng.random_range(2..=5),
        stride: 7,
        seed: rng.random(),
    };
    let samples = build_samples(field, &layout, &spec).unwrap();
    let pick = rng.random_range(0..samples.len() - 2);
    let batch = samples[pick..pick + 2].to_vec();
    let variant = match case {
        0 => Variant::EXTENDED,
        1 => Variant::VANILLA,
        _ => Variant {
            cnn: rng.random_bool(0.5),
            attention: rng.random_bool(0.5),
            param_net: rng.random_bool(0.5),
        },
    };
    let mut config = ModelConfig {
        k: rng.random_range(2..=4),
        window,
        sensors,
        conv_channels: vec![rng.random_range(1..=3), rng.random_range(1..=3)],
        head: vec![rng.random_range(3..=5)],
        trunk_width: rng.random_range(3..=5),
        trunk_layers: rng.random_range(1..=3),
        segments: rng.random_range(1..=3),
        variant,
        seed: rng.random(),
        ..ModelConfig::default()
    };
    config.physics.q_floor = 1e-9;
    config.physics.v_floor = 1e-9;
    let mut m = ExtendedModel::new(config).unwrap();
    m.prepare(&batch).unwrap();
    (m, batch)
}

fn loss_value(m: &ExtendedModel, batch: &[&TrainSample], w: &LossWeights) -> f64 {
    let mut g = Graph::new(2);
    let t = total_loss(&mut g, m, batch, w).unwrap();
    g.value(t.total).item()
}

/// Model outputs `(q, v)` at `coords` for one window, plus their tangents
/// along coordinate `direction` when `direction` is given.
fn decode_at(m: &ExtendedModel, w: &MeasurementWindow, coords: &Array, direction: Option<usize>) -> Vec<Vec<f64>> {
    let owner = vec![0; coords.shape()[0]];
    let run = |g: &mut Graph, y| {
        let enc = m.encode(g, &[w])?;
        let (q, v) = m.decode(g, &enc, y, &owner)?;
        Ok(vec![q, v])
    };
    match direction {
        Some(d) => {
            let mut g = Graph::new(1);
            let tangents = coordinate_derivative(&mut g, coords, d, run).unwrap();
            tangents.iter().map(|t| g.value(*t).data().to_vec()).collect()
        }
        None => {
            let mut g = Graph::new(0);
            let y = g.constant(coords.clone());
            let out = run(&mut g, y).unwrap();
            out.iter().map(|o| g.value(*o).data().to_vec()).collect()
        }
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let field = simulate_pw(&small_scenario()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (h, tol) = (1e-6, 1e-4);
    let (mut worst_param, mut worst_coord, mut checked) = (0.0f64, 0.0f64, 0usize);
    let cases = 20;
    for case in 0..cases {
        let (m, samples) = random_tiny_model(&mut rng, case, &field);
        let batch: Vec<&TrainSample> = samples.iter().collect();
        let w = LossWeights::default();
        let mut g = Graph::new(2);
        let t = total_loss(&mut g, &m, &batch, &w).unwrap();
        let grads = g.backward(t.total, m.params()).unwrap();
        // Central differences at h = 1e-6 carry round-off near eps |L| / h,
        // so entries far below the loss scale are compared against it.
        let floor = (1e-5 * g.value(t.total).item().abs()).max(1e-6);
        for (name, value) in m.params().iter() {
            let n = value.len();
            let picks: Vec<usize> = if n <= 6 { (0..n).collect() } else { (0..6).map(|_| rng.random_range(0..n)).collect() };
            for i in picks {
                let shifted = |d: f64| {
                    let mut mm = m.clone();
                    mm.params_mut().get_mut(name).unwrap().data_mut()[i] += d;
                    loss_value(&mm, &batch, &w)
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                let an = grads.get(name).unwrap().data()[i];
                worst_param = worst_param.max(rel(an, fd, floor));
                checked += 1;
            }
        }
        let win = &samples[0].window;
        let pts: Vec<f64> = (0..4).flat_map(|_| [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)]).collect();
        let coords = Array::matrix(4, 2, pts.clone()).unwrap();
        for d in 0..2 {
            let an = decode_at(&m, win, &coords, Some(d));
            let shift = |s: f64| {
                let mut p = pts.clone();
                for r in 0..4 {
                    p[2 * r + d] += s;
                }
                decode_at(&m, win, &Array::matrix(4, 2, p).unwrap(), None)
            };
            let (up, down) = (shift(h), shift(-h));
            for o in 0..2 {
                for r in 0..4 {
                    let fd = (up[o][r] - down[o][r]) / (2.0 * h);
                    worst_coord = worst_coord.max(rel(an[o][r], fd, 1e-6));
                    checked += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_param < tol && worst_coord < tol && secs < 60.0,
        format!(
            "{cases} configs, {checked} derivatives; worst relative error {worst_param:.2e} (weights), \
             {worst_coord:.2e} (coordinates); tol {tol:.0e}; {secs:.1} s (limit 60 s)"
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let units = UnitSystem::METRIC;
    let mut worst = 0.0f64;
    let mut n = 0;
    while n < 100 {
        let fd = FdParams::new(
            rng.random_range(20.0..150.0),
            rng.random_range(0.01..0.1),
            rng.random_range(0.5..4.0),
        )
        .unwrap();
        let rho = rng.random_range(0.05..3.0) * fd.rho_c;
        let mut g = Graph::new(2);
        let r = g.constant(Array::column(vec![rho]));
        let nodes = FdNodes::constant(&mut g, &[fd], &[0], &units).unwrap();
        let v_node = fd_speed(&mut g, r, &nodes).unwrap();
        let v_base = g.value(v_node).item();
        if v_base < 0.5 {
            continue;
        }
        let v = v_base / units.speed_to_base();
        let q = rho * v_base / units.flow_to_base();
        let stats = NormStats {
            speed_mean: rng.random_range(0.0..100.0),
            speed_std: rng.random_range(0.5..30.0),
            flow_mean: rng.random_range(0.0..2000.0),
            flow_std: rng.random_range(50.0..800.0),
        };
        let ctx = PhysicsContext {
            length: rng.random_range(500.0..5000.0),
            span: rng.random_range(30.0..600.0),
            stats,
            units,
            pw: PwConstants::default(),
            options: PhysicsOptions::default(),
        };
        let pts = 5;
        let flat: Vec<f64> = (0..2 * pts).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut g = Graph::new(2);
        let y = coordinate_input(&mut g, Array::matrix(pts, 2, flat).unwrap()).unwrap();
        let zero = g.scale(y, 0.0).unwrap();
        let zero = g.slice(zero, 1, 0, 1).unwrap();
        let qn = g.add_scalar(zero, stats.norm_flow(q)).unwrap();
        let vn = g.add_scalar(zero, stats.norm_speed(v)).unwrap();
        let nodes = FdNodes::constant(&mut g, &[fd], &vec![0; pts], &units).unwrap();
        let res = pw_residuals(&mut g, qn, vn, &nodes, &ctx).unwrap();
        for x in g.value(res.f1).data().iter().chain(g.value(res.f2).data()) {
            worst = worst.max(x.abs());
        }
        n += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-10 && secs < 5.0,
        format!("100 diagrams, max |f1|,|f2| = {worst:.2e} (limit 1e-10); {secs:.2} s (limit 5 s)"),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let fd = FdParams::new(100.0, 0.025, 2.0).unwrap();
    let mut cfg = small_scenario();
    cfg.length = 2000.0;
    cfg.horizon = 1000.0;
    cfg.segments = vec![fd, fd, FdParams::new(80.0, 0.02, 2.0).unwrap(), fd];
    cfg.initial = InitialState::Uniform { density: 0.012 };
    cfg.demand = Profile {
        points: vec![[0.0, 1000.0], [100.0, 1000.0], [200.0, 2000.0]],
    };
    cfg.downstream_speed = Profile::constant(200.0);
    cfg.sensors.inputs = vec![0.0, 1000.0, 2000.0];
    cfg.sensors.evaluation = vec![500.0];
    let out = simulate_pw_detailed(&cfg).unwrap();
    let cons = out.stats.conservation_error();

    let (rl, rr, x0, horizon) = (0.01, 0.06, 1500.0, 100.0);
    let mut shock = cfg.clone();
    shock.segments = vec![fd];
    shock.boundary = BoundaryKind::Transmissive;
    shock.horizon = horizon;
    shock.initial = InitialState::Riemann {
        left_density: rl,
        right_density: rr,
        position: x0,
    };
    let field = simulate_lwr_godunov(&shock).unwrap();
    let base = fd.to_base(&shock.units);
    let speed = (base.flow(rr) - base.flow(rl)) / (rr - rl);
    let expect = x0 - 0.5 * shock.dx + speed * horizon;
    let row = field.rows() - 1;
    let level = 0.5 * (rl + rr);
    let density = |j: usize| field.flow_at(row, j) / field.speed_at(row, j) / 1000.0;
    let got = (1..field.cols())
        .find(|&j| density(j - 1) < level && density(j) >= level)
        .map(|j| {
            let (a, b) = (density(j - 1), density(j));
            (j as f64 - 1.0 + (level - a) / (b - a)) * field.dx
        });
    let secs = start.elapsed().as_secs_f64();
    let cells = got.map(|g| (g - expect).abs() / shock.dx).unwrap_or(f64::INFINITY);
    outcome(
        out.stats.steps >= 1000 && cons < 1e-6 && cells <= 3.0 && secs < 30.0,
        format!(
            "{} steps, conservation error {cons:.2e} (limit 1e-6); shock {cells:.2} cells from \
             Rankine-Hugoniot (limit 3); {secs:.2} s (limit 30 s)",
            out.stats.steps
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_oracle, mut worst_scale) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let truth: Vec<f64> = (0..1000).map(|_| rng.random_range(-100.0..100.0)).collect();
        let est: Vec<f64> = truth.iter().map(|t| t + rng.random_range(-20.0..20.0)).collect();
        let (mut se, mut st) = (0.0, 0.0);
        for (e, t) in est.iter().zip(&truth) {
            se += (e - t) * (e - t);
            st += t * t;
        }
        let want_rmse = (se / 1000.0).sqrt();
        let want_re = 100.0 * se.sqrt() / st.sqrt();
        let (got_rmse, got_re) = (rmse(&est, &truth).unwrap(), re(&est, &truth).unwrap());
        worst_oracle = worst_oracle.max(rel(got_rmse, want_rmse, 1.0)).max(rel(got_re, want_re, 1.0));
        let s = rng.random_range(1e-3..1e3);
        let scaled = |v: &[f64]| v.iter().map(|x| s * x).collect::<Vec<_>>();
        let re_s = re(&scaled(&est), &scaled(&truth)).unwrap();
        worst_scale = worst_scale.max(rel(re_s, got_re, 1.0));
    }
    outcome(
        worst_oracle <= 1e-12 && worst_scale <= 1e-12,
        format!("oracle deviation {worst_oracle:.2e}, scale invariance deviation {worst_scale:.2e} (limit 1e-12)"),
    )
}

fn criterion_7() -> Outcome {
    let cfg = RunConfig::load(reference_path(), &[], None).unwrap();
    let positions = cfg.scenario.sensors.inputs.clone();
    let (rows, cols) = (cfg.dataset.window, positions.len());
    let window = MeasurementWindow {
        t0: 0.0,
        interval: cfg.scenario.sensors.cadence,
        length: cfg.scenario.length,
        positions,
        rows,
        cols,
        speed: vec![73.25; rows * cols],
        flow: vec![1480.5; rows * cols],
    };
    let est = adaptive_smoothing_estimate(
        &window,
        &cfg.smoothing().unwrap(),
        &Lattice::uniform(81, 23).unwrap(),
        cfg.scenario.units,
    )
    .unwrap();
    let mut worst = 0.0f64;
    for i in 0..est.rows() {
        for j in 0..est.cols() {
            worst = worst.max((est.speed_at(i, j) - 73.25).abs()).max((est.flow_at(i, j) - 1480.5).abs());
        }
    }
    outcome(worst <= 1e-9, format!("max deviation {worst:.2e} over {} points (limit 1e-9)", est.rows() * est.cols()))
}

struct Benchmark {
    cfg: RunConfig,
    data: Dataset,
    extended: ExtendedModel,
    ext_train: TrainReport,
    ext_secs: f64,
    ext_report: EvalReport,
    vanilla_report: EvalReport,
    inter2d_report: EvalReport,
}

fn score(b_cfg: &RunConfig, data: &Dataset, method: &dyn Estimator) -> EvalReport {
    let meta = EvalMeta {
        method: method.name(),
        scenario: b_cfg.scenario.id.clone(),
        sensor_count: data.layout.input_positions().len(),
        seed: b_cfg.train.seed,
    };
    evaluate_method(
        method,
        &data.test,
        &data.field,
        &data.layout.input_positions(),
        &data.layout.evaluation_positions(),
        meta,
    )
    .unwrap()
}

fn benchmark() -> Benchmark {
    let cfg = RunConfig::load(reference_path(), &[], None).unwrap();
    let data = pipeline::dataset(&cfg, None, cfg.scenario.layout().unwrap()).unwrap();
    let start = Instant::now();
    let (extended, ext_train) =
        pipeline::train_operator(&cfg, Variant::EXTENDED, &data.layout, &data.train, &data.val).unwrap();
    let ext_secs = start.elapsed().as_secs_f64();
    let (vanilla, _) = pipeline::train_operator(&cfg, Variant::VANILLA, &data.layout, &data.train, &data.val).unwrap();
    let inter2d = Inter2d {
        units: cfg.scenario.units,
    };
    Benchmark {
        ext_report: score(&cfg, &data, &extended),
        vanilla_report: score(&cfg, &data, &vanilla),
        inter2d_report: score(&cfg, &data, &inter2d),
        cfg,
        data,
        extended,
        ext_train,
        ext_secs,
    }
}

fn criterion_5(b: &Benchmark) -> Outcome {
    let (e, v, i) = (&b.ext_report, &b.vanilla_report, &b.inter2d_report);
    let steps_ok = b.ext_train.steps <= 2000 && b.ext_secs < 900.0;
    let a = e.speed.re <= 15.0 && e.flow.re <= 20.0;
    let bb = e.speed.re < i.speed.re;
    let c = v.speed.re >= e.speed.re;
    let mark = |p: bool| if p { "ok" } else { "FAIL" };
    outcome(
        steps_ok && a && bb && c,
        format!(
            "{} steps in {:.0} s; (a) extended RE speed {:.2}% (<= 15), flow {:.2}% (<= 20) {}; \
             (b) inter2d RE speed {:.2}% {}; (c) vanilla RE speed {:.2}% {}",
            b.ext_train.steps,
            b.ext_secs,
            e.speed.re,
            e.flow.re,
            mark(a),
            i.speed.re,
            mark(bb),
            v.speed.re,
            mark(c)
        ),
    )
}

fn criterion_6(b: &Benchmark) -> Outcome {
    let s = &b.cfg.scenario;
    let n = s.segments.len();
    let (mut free, mut cong, mut total) = (vec![0usize; n], vec![0usize; n], vec![0usize; n]);
    for sample in &b.data.train {
        let w = &sample.window;
        for r in 0..w.rows {
            for (c, &x) in w.positions.iter().enumerate() {
                let seg = segment_of(x / s.length, n);
                let fd = s.segments[seg].to_base(&s.units);
                let rho = w.flow_at(r, c) * s.units.flow_to_base() / (w.speed_at(r, c) * s.units.speed_to_base());
                total[seg] += 1;
                if rho > fd.rho_c {
                    cong[seg] += 1;
                } else {
                    free[seg] += 1;
                }
            }
        }
    }
    let mut sums = vec![0.0; n];
    for sample in &b.data.test {
        for (k, p) in b.extended.param_net_forward(&sample.window).unwrap().iter().enumerate() {
            sums[k] += p.v_f;
        }
    }
    let mut parts = Vec::new();
    let (mut pass, mut assessed) = (true, 0);
    for k in 0..n {
        let learned = sums[k] / b.data.test.len() as f64;
        let truth = s.segments[k].v_f;
        let err = 100.0 * (learned - truth).abs() / truth;
        let both = 20 * free[k] >= total[k] && 20 * cong[k] >= total[k];
        if both {
            assessed += 1;
            pass &= err <= 15.0;
        }
        parts.push(format!(
            "seg {k}: {learned:.1} vs {truth:.1} ({err:.1}%{})",
            if both { "" } else { ", single regime" }
        ));
    }
    outcome(pass && assessed > 0, format!("{assessed} segments assessed (limit 15%): {}", parts.join("; ")))
}

fn criterion_8(b: &Benchmark) -> Outcome {
    let counts = [3, 6, 11];
    let full = b.data.layout.input_positions();
    let setup = SweepSetup {
        field: &b.data.field,
        observed: &b.data.observed,
        layout: &b.data.layout,
        spec: pipeline::sample_spec(&b.cfg).unwrap(),
        ratios: pipeline::ratios(&b.cfg),
        scenario: b.cfg.scenario.id.clone(),
        seed: b.cfg.train.seed,
    };
    let inter = run_sweep(&b.cfg, &setup, "inter2d", &counts).unwrap();
    let ext: BTreeMap<usize, EvalReport> = tse_core::eval::sensor_sensitivity_sweep(&setup, &counts, &mut |layout, train, val| {
        if layout.input_positions() == full {
            return Ok(Box::new(b.extended.clone()) as Box<dyn Estimator>);
        }
        let (m, _) = pipeline::train_operator(&b.cfg, Variant::EXTENDED, layout, train, val)?;
        Ok(Box::new(m))
    })
    .unwrap();
    let well_formed = |r: &BTreeMap<usize, EvalReport>| {
        counts.iter().all(|c| {
            r.get(c).is_some_and(|rep| {
                rep.meta.sensor_count == *c
                    && rep.speed.re.is_finite()
                    && rep.flow.re.is_finite()
                    && rep.to_json().is_ok_and(|j| serde_json::from_str::<serde_json::Value>(&j).is_ok())
            })
        })
    };
    let shape_ok = well_formed(&inter) && well_formed(&ext);
    let deg = |r: &BTreeMap<usize, EvalReport>| r[&3].speed.re - r[&11].speed.re;
    let (de, di) = (deg(&ext), deg(&inter));
    let line = |r: &BTreeMap<usize, EvalReport>| {
        counts.iter().map(|c| format!("{c}: {:.2}%", r[c].speed.re)).collect::<Vec<_>>().join(", ")
    };
    outcome(
        shape_ok && de < di,
        format!(
            "extended RE speed [{}], degradation {de:.2}; inter2d [{}], degradation {di:.2}",
            line(&ext),
            line(&inter)
        ),
    )
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_path();
    let short = ["--set", "train.max_steps=40", "--set", "train.epochs=2", "--seed", "5"];
    let steps: Vec<Vec<String>> = vec![
        vec!["simulate".into()],
        vec!["train".into()],
        vec!["evaluate".into(), "--checkpoint".into(), "{out}/model.ckpt".into()],
        vec!["estimate".into(), "--checkpoint".into(), "{out}/model.ckpt".into()],
        vec!["baseline".into(), "--method".into(), "inter2d".into()],
        vec!["sweep".into(), "--method".into(), "inter2d".into()],
    ];
    let run = |name: &str| -> Result<BTreeMap<String, Vec<u8>>, String> {
        let root = dir.path().join(name);
        std::fs::create_dir_all(&root).map_err(|e| e.to_string())?;
        let mut files = BTreeMap::new();
        for (k, step) in steps.iter().enumerate() {
            let out = k.to_string();
            let args: Vec<String> = step.iter().map(|a| a.replace("{out}", "1")).collect();
            let o = Command::new(env!("CARGO_BIN_EXE_tse"))
                .current_dir(&root)
                .arg("--config")
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .args(short)
                .args(&args)
                .output()
                .map_err(|e| e.to_string())?;
            if !o.status.success() {
                return Err(format!("`{}` failed: {}", step.join(" "), String::from_utf8_lossy(&o.stderr).trim()));
            }
            for entry in std::fs::read_dir(root.join(&out)).map_err(|e| e.to_string())? {
                let p = entry.map_err(|e| e.to_string())?.path();
                let key = format!("{k}/{}", p.file_name().unwrap().to_string_lossy());
                files.insert(key, std::fs::read(&p).map_err(|e| e.to_string())?);
            }
        }
        Ok(files)
    };
    match (run("a"), run("b")) {
        (Ok(a), Ok(b)) => {
            let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
            let same_set = a.keys().eq(b.keys());
            outcome(
                differing.is_empty() && same_set,
                format!("{} files over {} commands compared; differing: {differing:?}", a.len(), steps.len()),
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}

/// Runs every criterion, or only those whose numbers are given as
/// arguments.
fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let selected: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let wants = |id: usize| selected.is_empty() || selected.contains(&id);
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |id: usize, o: Outcome| {
        println!("criterion {id}: {} : {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, o));
    };
    let quick: [(usize, fn() -> Outcome); 6] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (7, criterion_7),
        (9, criterion_9),
    ];
    for (id, f) in quick {
        if wants(id) {
            report(id, f());
        }
    }
    if wants(5) || wants(6) || wants(8) {
        let b = benchmark();
        let heavy: [(usize, fn(&Benchmark) -> Outcome); 3] = [(5, criterion_5), (6, criterion_6), (8, criterion_8)];
        for (id, f) in heavy {
            if wants(id) {
                report(id, f(&b));
            }
        }
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    println!("acceptance: {} passed, {} failed", results.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
