use crate::data::{EstimateField, Lattice, MeasurementWindow, UnitSystem};
use crate::error::{Error, Result};
use crate::eval::Estimator;

/// Values of one variable on a rectilinear sensor-time grid.
pub(crate) struct SensorGrid<'a> {
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    /// Row-major `ts.len() x xs.len()`.
    pub values: &'a [f64],
}

/// Index of the cell `[k, k + 1]` containing `v` and the fraction across
/// it, after clamping `v` into the grid hull.
fn locate(grid: &[f64], v: f64) -> (usize, f64) {
    let n = grid.len();
    let v = v.clamp(grid[0], grid[n - 1]);
    let k = grid.partition_point(|g| *g <= v).clamp(1, n - 1) - 1;
    let span = grid[k + 1] - grid[k];
    (k, if span > 0.0 { (v - grid[k]) / span } else { 0.0 })
}

impl SensorGrid<'_> {
    pub fn bilinear(&self, x: f64, t: f64) -> f64 {
        let (j, fx) = locate(&self.xs, x);
        let (i, ft) = locate(&self.ts, t);
        let w = self.xs.len();
        let at = |r: usize, c: usize| self.values[r * w + c];
        let lo = at(i, j) * (1.0 - fx) + at(i, j + 1) * fx;
        let hi = at(i + 1, j) * (1.0 - fx) + at(i + 1, j + 1) * fx;
        lo * (1.0 - ft) + hi * ft
    }
}

fn check_grid(window: &MeasurementWindow) -> Result<(Vec<f64>, Vec<f64>)> {
    if window.cols < 2 {
        return Err(Error::InsufficientData(format!(
            "interpolation needs at least 2 sensors, got {}",
            window.cols
        )));
    }
    if window.rows < 2 {
        return Err(Error::InsufficientData("interpolation needs at least 2 instants".into()));
    }
    window.validate()?;
    let xs = window.positions.iter().map(|p| p / window.length).collect();
    let ts = (0..window.rows).map(|k| k as f64 / (window.rows - 1) as f64).collect();
    Ok((xs, ts))
}

/// Bilinear interpolation of each variable over the sensor-time grid of
/// `window`, held constant beyond the outermost sensors.
pub fn inter2d_estimate(window: &MeasurementWindow, lattice: &Lattice, units: UnitSystem) -> Result<EstimateField> {
    let (xs, ts) = check_grid(window)?;
    let sv = SensorGrid {
        xs: xs.clone(),
        ts: ts.clone(),
        values: &window.speed,
    };
    let sq = SensorGrid {
        xs,
        ts,
        values: &window.flow,
    };
    let pts = lattice.points();
    EstimateField::new(
        units,
        lattice.clone(),
        pts.iter().map(|p| sv.bilinear(p.x, p.t)).collect(),
        pts.iter().map(|p| sq.bilinear(p.x, p.t)).collect(),
    )
}

/// [`inter2d_estimate`] as an evaluation method.
#[derive(Clone, Copy, Debug)]
pub struct Inter2d {
    pub units: UnitSystem,
}

impl Estimator for Inter2d {
    fn name(&self) -> String {
        "inter2d".into()
    }

    fn estimate(&self, window: &MeasurementWindow, lattice: &Lattice) -> Result<EstimateField> {
        inter2d_estimate(window, lattice, self.units)
    }
}
