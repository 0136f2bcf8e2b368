use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use tse_core::baselines::Pinn;
use tse_core::data::{aggregate_trajectories, build_samples, load_trajectories, GroundTruthField, SpaceTimeDomain};
use tse_core::eval::{
    evaluate_method, export_heatmap, reconstruct_field, sensor_sensitivity_sweep, EvalMeta, EvalReport, Estimator,
    SweepSetup,
};
use tse_core::nets::{Checkpoint, ExtendedModel};
use tse_core::sim::{sample_sensors, simulate_pw};
use tse_core::train::TrainReport;
use tse_core::{Error, Result};

use crate::config::RunConfig;
use crate::manifest::Manifest;
use crate::pipeline::{self, Dataset};

#[derive(Debug, Parser)]
#[command(name = "tse", version, about = "Traffic state estimation with physics-informed operator networks")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed for sampling, initialization and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Dotted config override, e.g. `train.lr=0.002`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the scenario and write the ground-truth field and sensor series.
    Simulate,
    /// Aggregate a trajectory file onto a grid.
    Ingest {
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        length: f64,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        dx: f64,
        #[arg(long)]
        dt: f64,
    },
    /// Train a model and write its checkpoint and training report.
    Train {
        /// extended, vanilla or pinn.
        #[arg(long, default_value = "extended")]
        variant: String,
        /// Grid CSV to use instead of simulating the scenario.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Reconstruct the full field from the input sensors with a checkpoint.
    Estimate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Score a checkpoint on the test split at the evaluation sensors.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Retrain and rescore a method for each input-sensor count.
    Sweep {
        /// extended, vanilla, pinn, inter2d or as.
        #[arg(long, default_value = "extended")]
        method: String,
        /// Comma-separated counts; the config's list when absent.
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<usize>>,
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Score a comparison method: inter2d, as, pinn or vanilla.
    Baseline {
        #[arg(long)]
        method: String,
        #[arg(long)]
        field: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Ingest { .. } => "ingest",
            Command::Train { .. } => "train",
            Command::Estimate { .. } => "estimate",
            Command::Evaluate { .. } => "evaluate",
            Command::Sweep { .. } => "sweep",
            Command::Baseline { .. } => "baseline",
        }
    }
}

/// Runs one subcommand and returns the paths it wrote, manifest last.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", cli.out.display())))?;
    let out = cli.out.as_path();
    if let Command::Ingest {
        trajectories,
        length,
        horizon,
        dx,
        dt,
    } = &cli.command
    {
        let (units, points) = load_trajectories(trajectories)?;
        let domain = SpaceTimeDomain::new(*length, *horizon, *dx, *dt, units)?;
        let field = aggregate_trajectories(&points, &domain)?;
        let path = out.join("field.csv");
        field.save(&path)?;
        let mut m = Manifest::new("ingest", serde_json::to_value(domain)?);
        m.input(trajectories)?;
        let manifest = m.finish(out, std::slice::from_ref(&path))?;
        return Ok(vec![path, manifest]);
    }
    let cfg_path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config(format!("`{}` needs --config", cli.command.name())))?;
    let cfg = RunConfig::load(cfg_path, &cli.set, cli.seed)?;
    let mut manifest = Manifest::new(cli.command.name(), serde_json::to_value(&cfg)?);
    manifest.input(cfg_path)?;
    let field_arg = match &cli.command {
        Command::Train { field, .. }
        | Command::Estimate { field, .. }
        | Command::Evaluate { field, .. }
        | Command::Sweep { field, .. }
        | Command::Baseline { field, .. } => field.clone(),
        _ => None,
    };
    if let Some(f) = &field_arg {
        manifest.input(f)?;
    }
    let outputs = match &cli.command {
        Command::Simulate => simulate(&cfg, out)?,
        Command::Ingest { .. } => unreachable!("handled above"),
        Command::Train { variant, .. } => train(&cfg, out, variant, field_arg.as_deref())?,
        Command::Estimate { checkpoint, .. } => {
            manifest.input(checkpoint)?;
            estimate(&cfg, out, checkpoint, field_arg.as_deref())?
        }
        Command::Evaluate { checkpoint, .. } => {
            manifest.input(checkpoint)?;
            evaluate(&cfg, out, checkpoint, field_arg.as_deref())?
        }
        Command::Sweep { method, counts, .. } => {
            let counts = counts.clone().unwrap_or_else(|| cfg.sweep.counts.clone());
            sweep(&cfg, out, method, &counts, field_arg.as_deref())?
        }
        Command::Baseline { method, .. } => baseline(&cfg, out, method, field_arg.as_deref())?,
    };
    let m = manifest.finish(out, &outputs)?;
    Ok(outputs.into_iter().chain([m]).collect())
}

fn write_text(path: PathBuf, text: &str) -> Result<PathBuf> {
    std::fs::write(&path, text)?;
    Ok(path)
}

fn load_data(cfg: &RunConfig, field: Option<&Path>) -> Result<Dataset> {
    let field = field.map(GroundTruthField::load).transpose()?;
    pipeline::dataset(cfg, field, cfg.scenario.layout()?)
}

fn ensure_finite_report(r: &EvalReport) -> Result<()> {
    let mut values = vec![r.speed.rmse, r.speed.re, r.flow.rmse, r.flow.re];
    for s in &r.sensors {
        values.extend([s.speed.rmse, s.speed.re, s.flow.rmse, s.flow.re]);
    }
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op: "evaluation report" })
    }
}

fn write_report(r: &EvalReport, path: PathBuf) -> Result<PathBuf> {
    ensure_finite_report(r)?;
    write_text(path, &(r.to_json()? + "\n"))
}

fn write_train_report(r: &TrainReport, path: PathBuf) -> Result<PathBuf> {
    write_text(path, &(r.to_json()? + "\n"))
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let field = simulate_pw(&cfg.scenario)?;
    let field_path = out.join("field.csv");
    field.save(&field_path)?;
    let s = &cfg.scenario;
    let mut positions = s.sensors.inputs.clone();
    positions.extend(&s.sensors.evaluation);
    let series = sample_sensors(&field, &positions, s.sensors.cadence, &s.noise, s.seed)?;
    let sensors = write_text(out.join("sensors.json"), &(serde_json::to_string_pretty(&series)? + "\n"))?;
    let echo = write_text(out.join("scenario.toml"), &toml::to_string(s).map_err(|e| Error::Config(e.to_string()))?)?;
    Ok(vec![field_path, sensors, echo])
}

fn train(cfg: &RunConfig, out: &Path, variant: &str, field: Option<&Path>) -> Result<Vec<PathBuf>> {
    let data = load_data(cfg, field)?;
    let ck = out.join("model.ckpt");
    let report = if variant == "pinn" {
        let (model, report) = pipeline::train_pinn(cfg, &data)?;
        model.to_checkpoint()?.save(&ck)?;
        report
    } else {
        let flags = pipeline::variant_flags(variant)?;
        let (model, report) = pipeline::train_operator(cfg, flags, &data.layout, &data.train, &data.val)?;
        model.save(&ck)?;
        report
    };
    let report = TrainReport {
        checkpoint: Some("model.ckpt".into()),
        ..report
    };
    Ok(vec![ck, write_train_report(&report, out.join("train_report.json"))?])
}

/// Estimator stored in a checkpoint.
fn load_estimator(path: &Path) -> Result<Box<dyn Estimator>> {
    if !path.exists() {
        return Err(Error::Checkpoint(format!("checkpoint {} not found", path.display())));
    }
    let ck = Checkpoint::load(path)?;
    if ck.kind == "pinn" {
        Ok(Box::new(Pinn::from_checkpoint(&ck)?))
    } else {
        Ok(Box::new(ExtendedModel::from_checkpoint(&ck)?))
    }
}

fn estimate(cfg: &RunConfig, out: &Path, checkpoint: &Path, field: Option<&Path>) -> Result<Vec<PathBuf>> {
    let method = load_estimator(checkpoint)?;
    let data = load_data(cfg, field)?;
    let est = reconstruct_field(
        method.as_ref(),
        &data.observed,
        &data.layout,
        cfg.dataset.window,
        cfg.cadence_rows()?,
    )?;
    let path = out.join("estimate.csv");
    est.save(&path)?;
    Ok(vec![path])
}

fn score(cfg: &RunConfig, out: &Path, method: &dyn Estimator, data: &Dataset, stem: &str) -> Result<Vec<PathBuf>> {
    let inputs = data.layout.input_positions();
    let meta = EvalMeta {
        method: method.name(),
        scenario: cfg.scenario.id.clone(),
        sensor_count: inputs.len(),
        seed: cfg.train.seed,
    };
    let report = evaluate_method(
        method,
        &data.test,
        &data.field,
        &inputs,
        &data.layout.evaluation_positions(),
        meta,
    )?;
    let mut paths = vec![write_report(&report, out.join(format!("report_{stem}.json")))?];
    let est = reconstruct_field(method, &data.observed, &data.layout, cfg.dataset.window, cfg.cadence_rows()?)?;
    paths.extend(export_heatmap(&est, &data.field, out, &format!("heatmap_{stem}"))?);
    Ok(paths)
}

fn evaluate(cfg: &RunConfig, out: &Path, checkpoint: &Path, field: Option<&Path>) -> Result<Vec<PathBuf>> {
    let method = load_estimator(checkpoint)?;
    let data = load_data(cfg, field)?;
    let stem = method.name();
    score(cfg, out, method.as_ref(), &data, &stem)
}

fn baseline(cfg: &RunConfig, out: &Path, method: &str, field: Option<&Path>) -> Result<Vec<PathBuf>> {
    let data = load_data(cfg, field)?;
    let mut paths = Vec::new();
    let est: Box<dyn Estimator> = match method {
        "pinn" => {
            let (m, report) = pipeline::train_pinn(cfg, &data)?;
            paths.push(write_train_report(&report, out.join("train_report_pinn.json"))?);
            Box::new(m)
        }
        "vanilla" => {
            let flags = pipeline::variant_flags("vanilla")?;
            let (m, report) = pipeline::train_operator(cfg, flags, &data.layout, &data.train, &data.val)?;
            paths.push(write_train_report(&report, out.join("train_report_vanilla.json"))?);
            Box::new(m)
        }
        other => pipeline::classical_baseline(cfg, other)?,
    };
    paths.extend(score(cfg, out, est.as_ref(), &data, method)?);
    Ok(paths)
}

fn sweep(cfg: &RunConfig, out: &Path, method: &str, counts: &[usize], field: Option<&Path>) -> Result<Vec<PathBuf>> {
    let data = load_data(cfg, field)?;
    let setup = SweepSetup {
        field: &data.field,
        observed: &data.observed,
        layout: &data.layout,
        spec: pipeline::sample_spec(cfg)?,
        ratios: pipeline::ratios(cfg),
        scenario: cfg.scenario.id.clone(),
        seed: cfg.train.seed,
    };
    let reports = run_sweep(cfg, &setup, method, counts)?;
    let mut paths = Vec::new();
    let mut summary = BTreeMap::new();
    for (count, r) in &reports {
        paths.push(write_report(r, out.join(format!("sweep_{method}_{count}.json")))?);
        summary.insert(count.to_string(), serde_json::json!({ "speed_re": r.speed.re, "flow_re": r.flow.re }));
    }
    let text = serde_json::to_string_pretty(&serde_json::json!({ "method": method, "counts": summary }))? + "\n";
    paths.push(write_text(out.join(format!("sweep_{method}_summary.json")), &text)?);
    Ok(paths)
}

/// Sensitivity sweep of a named method under `cfg`.
pub fn run_sweep(
    cfg: &RunConfig,
    setup: &SweepSetup<'_>,
    method: &str,
    counts: &[usize],
) -> Result<BTreeMap<usize, EvalReport>> {
    sensor_sensitivity_sweep(setup, counts, &mut |layout, train, val| -> Result<Box<dyn Estimator>> {
        match method {
            "extended" | "vanilla" => {
                let flags = pipeline::variant_flags(method)?;
                Ok(Box::new(pipeline::train_operator(cfg, flags, layout, train, val)?.0))
            }
            "pinn" => {
                // Transductive like the single-layout run: every window of the
                // reduced input set, evaluation sensors excluded.
                let all = build_samples(setup.observed, layout, &setup.spec)?;
                Ok(Box::new(Pinn::fit(pipeline::pinn_config(cfg), &all, &cfg.train)?.0))
            }
            other => pipeline::classical_baseline(cfg, other),
        }
    })
}
