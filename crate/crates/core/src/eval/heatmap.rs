use std::path::{Path, PathBuf};

use super::report::{window_rows, Estimator};
use crate::data::{build_samples, GroundTruthField, Lattice, SampleSpec, SensorLayout};
use crate::error::{Error, Result};

/// Writes `{stem}_estimate.csv`, `{stem}_truth.csv` and `{stem}_abs_error.csv`
/// grids into `dir`.
pub fn export_heatmap(
    estimate: &GroundTruthField,
    truth: &GroundTruthField,
    dir: impl AsRef<Path>,
    stem: &str,
) -> Result<[PathBuf; 3]> {
    let same = estimate.rows() == truth.rows()
        && estimate.cols() == truth.cols()
        && (estimate.dx - truth.dx).abs() <= 1e-9 * truth.dx
        && (estimate.dt - truth.dt).abs() <= 1e-9 * truth.dt;
    if !same {
        return Err(Error::InvalidArgument(format!(
            "lattice mismatch: estimate {}x{} (dx {}, dt {}) vs truth {}x{} (dx {}, dt {})",
            estimate.rows(),
            estimate.cols(),
            estimate.dx,
            estimate.dt,
            truth.rows(),
            truth.cols(),
            truth.dx,
            truth.dt
        )));
    }
    let abs = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>();
    let err = GroundTruthField::new(
        truth.units,
        truth.dx,
        truth.dt,
        truth.rows(),
        truth.cols(),
        abs(estimate.speed(), truth.speed()),
        abs(estimate.flow(), truth.flow()),
    )?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let paths = [
        dir.join(format!("{stem}_estimate.csv")),
        dir.join(format!("{stem}_truth.csv")),
        dir.join(format!("{stem}_abs_error.csv")),
    ];
    for (f, p) in [estimate, truth, &err].into_iter().zip(&paths) {
        f.save(p)?;
    }
    Ok(paths)
}

/// Estimates the whole field from its input sensors by stitching
/// consecutive non-overlapping windows; a final window anchored at the end
/// covers any remainder.
pub fn reconstruct_field(
    method: &dyn Estimator,
    field: &GroundTruthField,
    layout: &SensorLayout,
    window: usize,
    cadence_rows: usize,
) -> Result<GroundTruthField> {
    let spec = SampleSpec {
        window,
        cadence_rows,
        collocation: 0,
        stride: 1,
        seed: 0,
    };
    let all = build_samples(field, layout, &spec)?;
    let span_rows = (window - 1) * cadence_rows;
    let last_anchor = field.rows() - 1 - span_rows;
    let mut anchors: Vec<usize> = (0..=last_anchor).step_by(span_rows).collect();
    if anchors.last() != Some(&last_anchor) {
        anchors.push(last_anchor);
    }
    let xs: Vec<f64> = (0..field.cols()).map(|j| j as f64 * field.dx / field.length()).collect();
    let (n, w) = (field.rows(), field.cols());
    let mut speed = vec![0.0; n * w];
    let mut flow = vec![0.0; n * w];
    for s in all.iter().filter(|s| anchors.contains(&s.anchor_row)) {
        let (rows, ts) = window_rows(s);
        let est = method.estimate(&s.window, &Lattice::new(xs.clone(), ts)?)?;
        for (i, &r) in rows.iter().enumerate() {
            for j in 0..w {
                speed[r * w + j] = est.speed_at(i, j);
                flow[r * w + j] = est.flow_at(i, j);
            }
        }
    }
    GroundTruthField::new(field.units, field.dx, field.dt, n, w, speed, flow)
}
