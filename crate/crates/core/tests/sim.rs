use tse_core::data::{GroundTruthField, UnitSystem};
use tse_core::physics::{FdParams, PwConstants};
use tse_core::sim::{
    sample_sensors, simulate_lwr_detailed, simulate_lwr_godunov, simulate_pw, simulate_pw_detailed,
    BoundaryKind, InitialState, NoiseConfig, Profile, ScenarioConfig, SensorConfig,
};
use tse_core::Error;

const FD: FdParams = FdParams {
    v_f: 100.0,
    rho_c: 0.025,
    a: 2.0,
};

fn base(initial: InitialState) -> ScenarioConfig {
    ScenarioConfig {
        id: "test".into(),
        units: UnitSystem::METRIC,
        length: 2000.0,
        horizon: 600.0,
        dx: 50.0,
        dt: 1.0,
        output_dt: 5.0,
        pw: PwConstants::default(),
        jam_density: 0.15,
        segments: vec![FD],
        initial,
        boundary: BoundaryKind::Profiles,
        demand: Profile::constant(0.0),
        downstream_speed: Profile::constant(200.0),
        sensors: SensorConfig {
            inputs: vec![0.0, 1000.0, 2000.0],
            evaluation: vec![500.0],
            cadence: 5.0,
        },
        noise: NoiseConfig::default(),
        seed: 1,
    }
}

fn density(f: &GroundTruthField, row: usize, col: usize) -> f64 {
    // flow veh/h over speed km/h gives veh/km
    f.flow_at(row, col) / f.speed_at(row, col) / 1000.0
}

fn equilibrium_config() -> ScenarioConfig {
    let rho = 0.015;
    let v = FD.speed(rho).unwrap();
    let mut cfg = base(InitialState::Uniform { density: rho });
    cfg.demand = Profile::constant(rho * v * 1000.0);
    cfg.downstream_speed = Profile::constant(v);
    cfg
}

#[test]
fn equilibrium_is_a_fixed_point_of_both_schemes() {
    let cfg = equilibrium_config();
    for field in [simulate_pw(&cfg).unwrap(), simulate_lwr_godunov(&cfg).unwrap()] {
        let (v0, q0) = (field.speed_at(0, 0), field.flow_at(0, 0));
        for (v, q) in field.speed().iter().zip(field.flow()) {
            assert!(((v - v0) / v0).abs() < 1e-8, "{v} vs {v0}");
            assert!(((q - q0) / q0).abs() < 1e-8, "{q} vs {q0}");
        }
        assert_eq!(field.rows(), 121);
        assert_eq!(field.cols(), 41);
    }
}

#[test]
fn cfl_violation_reports_limit() {
    let mut cfg = equilibrium_config();
    cfg.dt = 2.5;
    cfg.output_dt = 5.0;
    match simulate_pw(&cfg) {
        Err(Error::Cfl { dt, limit }) => {
            assert_eq!(dt, 2.5);
            assert!((limit - cfg.cfl_limit()).abs() < 1e-15);
            assert!(limit < 2.5 && limit > 1.0);
        }
        other => panic!("expected CFL error, got {other:?}"),
    }
}

fn surge_config() -> ScenarioConfig {
    let mut cfg = base(InitialState::Uniform { density: 0.012 });
    cfg.horizon = 1000.0;
    cfg.segments = vec![
        FD,
        FD,
        FdParams {
            v_f: 80.0,
            rho_c: 0.02,
            a: 2.0,
        },
        FD,
    ];
    cfg.demand = Profile {
        points: vec![[0.0, 1000.0], [100.0, 1000.0], [200.0, 2000.0]],
    };
    cfg
}

#[test]
fn pw_conserves_vehicles_up_to_boundary_fluxes() {
    let out = simulate_pw_detailed(&surge_config()).unwrap();
    assert_eq!(out.stats.steps, 1000);
    assert_eq!(out.stats.clamp_events, 0);
    let err = out.stats.conservation_error();
    assert!(err < 1e-6, "conservation error {err}");
    let out = simulate_lwr_detailed(&surge_config()).unwrap();
    assert!(out.stats.conservation_error() < 1e-6);
}

/// Position of the first interface, scanning downstream, where density
/// crosses `level`.
fn crossing(field: &GroundTruthField, row: usize, level: f64, rising: bool) -> f64 {
    for j in 1..field.cols() {
        let (a, b) = (density(field, row, j - 1), density(field, row, j));
        if (rising && a < level && b >= level) || (!rising && a > level && b <= level) {
            let s = (level - a) / (b - a);
            return (j as f64 - 1.0 + s) * field.dx;
        }
    }
    panic!("no crossing of {level} in row {row}");
}

#[test]
fn godunov_shock_moves_at_chord_speed() {
    let (rl, rr) = (0.01, 0.06);
    let mut cfg = base(InitialState::Riemann {
        left_density: rl,
        right_density: rr,
        position: 1500.0,
    });
    cfg.boundary = BoundaryKind::Transmissive;
    cfg.horizon = 100.0;
    let field = simulate_lwr_godunov(&cfg).unwrap();
    let fd = FD.to_base(&cfg.units);
    let speed = (fd.flow(rr) - fd.flow(rl)) / (rr - rl);
    let expect = 1500.0 - 0.5 * cfg.dx + speed * 100.0;
    let got = crossing(&field, field.rows() - 1, 0.5 * (rl + rr), true);
    assert!(
        (got - expect).abs() <= cfg.dx,
        "shock at {got}, expected {expect} (speed {speed} m/s)"
    );
}

#[test]
fn godunov_rarefaction_is_monotone() {
    let mut cfg = base(InitialState::Riemann {
        left_density: 0.06,
        right_density: 0.01,
        position: 1000.0,
    });
    cfg.boundary = BoundaryKind::Transmissive;
    cfg.horizon = 100.0;
    let field = simulate_lwr_godunov(&cfg).unwrap();
    let last = field.rows() - 1;
    for j in 1..field.cols() {
        assert!(density(&field, last, j) <= density(&field, last, j - 1) + 1e-15);
    }
    let uniform = simulate_lwr_godunov(&equilibrium_config()).unwrap();
    assert!(uniform.flow().iter().all(|q| (q - uniform.flow()[0]).abs() < 1e-9 * q));
}

#[test]
fn zero_demand_drains_every_cell_monotonically() {
    let mut cfg = base(InitialState::Uniform { density: 0.01 });
    cfg.horizon = 300.0;
    let field = simulate_pw(&cfg).unwrap();
    for j in 0..field.cols() {
        for i in 1..field.rows() {
            let (a, b) = (density(&field, i - 1, j), density(&field, i, j));
            assert!(b <= a * (1.0 + 1e-12), "cell {j} row {i}: {a} -> {b}");
        }
    }
    assert!(density(&field, field.rows() - 1, 20) < 0.5 * 0.01);
}

#[test]
fn congestion_front_travels_upstream() {
    let mut cfg = surge_config();
    cfg.horizon = 1500.0;
    let field = simulate_pw(&cfg).unwrap();
    let bottleneck_end = 1500.0;
    let front = |row: usize| -> Option<f64> {
        (0..field.cols())
            .map(|j| j as f64 * field.dx)
            .filter(|x| *x < bottleneck_end)
            .find(|&x| field.speed_at(row, (x / field.dx) as usize) < 60.0)
    };
    let mut fronts = Vec::new();
    for row in (0..field.rows()).step_by(12) {
        if let Some(x) = front(row) {
            fronts.push(x);
        }
    }
    assert!(fronts.len() > 5, "no congestion formed: {fronts:?}");
    for w in fronts.windows(2) {
        assert!(w[1] <= w[0], "front moved downstream: {fronts:?}");
    }
    assert!(fronts[fronts.len() - 1] < fronts[0], "front did not move: {fronts:?}");
}

/// Both states satisfy the sub-characteristic condition
/// `rho |F'(rho)| <= sqrt(c)`, where the relaxation system tracks the
/// first-order model.
#[test]
fn pw_and_lwr_agree_on_stable_shock() {
    let (rl, rr) = (0.004, 0.012);
    let fd = FD.to_base(&UnitSystem::METRIC);
    for rho in [rl, rr] {
        let slope = fd.speed(rho).unwrap() * (rho / fd.rho_c).powf(fd.a);
        assert!(slope <= PwConstants::default().c.sqrt());
    }
    let mut cfg = base(InitialState::Riemann {
        left_density: rl,
        right_density: rr,
        position: 200.0,
    });
    cfg.boundary = BoundaryKind::Transmissive;
    cfg.horizon = 40.0;
    let lwr = simulate_lwr_godunov(&cfg).unwrap();
    let pw = simulate_pw(&cfg).unwrap();
    let row = lwr.rows() - 1;
    let level = 0.5 * (rl + rr);
    let a = crossing(&lwr, row, level, true);
    let b = crossing(&pw, row, level, true);
    assert!((a - b).abs() <= 3.0 * cfg.dx, "LWR {a} vs PW {b}");
}

#[test]
fn sensor_sampling_contract() {
    let field = simulate_pw(&surge_config()).unwrap();
    let pos = [0.0, 1000.0, 2000.0];
    let clean = sample_sensors(&field, &pos, 5.0, &NoiseConfig::default(), 3).unwrap();
    for (w, &x) in pos.iter().enumerate() {
        let c = field.column_of(x).unwrap();
        for r in 0..field.rows() {
            assert_eq!(clean.speed[w][r], field.speed_at(r, c));
            assert_eq!(clean.flow[w][r], field.flow_at(r, c));
        }
    }
    let noise = NoiseConfig {
        speed: 1.0,
        flow: 1.0,
    };
    let a = sample_sensors(&field, &pos, 5.0, &noise, 11).unwrap();
    let b = sample_sensors(&field, &pos, 5.0, &noise, 11).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, clean);
    assert!(a.speed.iter().flatten().all(|v| *v >= 0.0));
    let half = sample_sensors(&field, &pos, 10.0, &NoiseConfig::default(), 0).unwrap();
    assert_eq!(half.times.len(), field.rows().div_ceil(2));
    assert!(matches!(
        sample_sensors(&field, &[25.0], 5.0, &NoiseConfig::default(), 0),
        Err(Error::OffGrid(_))
    ));
    assert!(sample_sensors(&field, &pos, 7.0, &NoiseConfig::default(), 0).is_err());
}
