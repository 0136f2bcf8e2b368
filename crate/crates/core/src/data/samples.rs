use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::domain::{QueryCoordinate, SensorLayout};
use super::field::GroundTruthField;
use crate::error::{Error, Result};

/// `rows x cols` history of speed and flow at the input sensors.
///
/// Row `k` is sensing instant `t0 + k * interval`; column `w` is the sensor
/// at `positions[w]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementWindow {
    pub t0: f64,
    pub interval: f64,
    /// Stretch length the positions are measured against.
    pub length: f64,
    pub positions: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub speed: Vec<f64>,
    pub flow: Vec<f64>,
}

impl MeasurementWindow {
    /// Seconds covered from the first to the last sensing instant.
    pub fn span(&self) -> f64 {
        (self.rows - 1) as f64 * self.interval
    }

    pub fn speed_at(&self, row: usize, col: usize) -> f64 {
        self.speed[row * self.cols + col]
    }

    pub fn flow_at(&self, row: usize, col: usize) -> f64 {
        self.flow[row * self.cols + col]
    }

    /// Checks the physical-unit invariants (same shape, finite, nonnegative).
    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 || self.positions.len() != self.cols {
            return Err(Error::InvalidArgument(format!(
                "window must be at least 2x2 with one position per column, got {}x{}",
                self.rows, self.cols
            )));
        }
        for grid in [&self.speed, &self.flow] {
            if grid.len() != self.rows * self.cols {
                return Err(Error::ShapeMismatch {
                    op: "window",
                    lhs: vec![self.rows, self.cols],
                    rhs: vec![grid.len()],
                });
            }
            if grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidArgument(
                    "window holds a negative or non-finite value".into(),
                ));
            }
        }
        Ok(())
    }
}

/// A sensor reading placed in the window's unit square.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedPoint {
    pub coord: QueryCoordinate,
    pub flow: f64,
    pub speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSample {
    pub window: MeasurementWindow,
    pub collocation: Vec<QueryCoordinate>,
    pub observed: Vec<ObservedPoint>,
    /// Field row of the anchor instant.
    pub anchor_row: usize,
    /// Field rows between consecutive sensing instants.
    pub row_step: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    /// Sensing instants per window (H).
    pub window: usize,
    /// Field rows per sensing interval.
    pub cadence_rows: usize,
    /// Collocation points per sample (P).
    pub collocation: usize,
    /// Sensing intervals between consecutive anchors.
    pub stride: usize,
    pub seed: u64,
}

/// Cuts the field into windows anchored every `stride` sensing intervals.
pub fn build_samples(
    field: &GroundTruthField,
    layout: &SensorLayout,
    spec: &SampleSpec,
) -> Result<Vec<TrainSample>> {
    if spec.window < 2 {
        return Err(Error::InvalidArgument("window needs at least 2 instants".into()));
    }
    if spec.stride == 0 || spec.cadence_rows == 0 {
        return Err(Error::InvalidArgument("stride and cadence must be at least 1".into()));
    }
    let positions = layout.input_positions();
    let cols: Vec<usize> = positions
        .iter()
        .map(|&x| field.column_of(x))
        .collect::<Result<_>>()?;
    let span_rows = (spec.window - 1) * spec.cadence_rows;
    if span_rows >= field.rows() {
        return Err(Error::InsufficientData(format!(
            "window spans {} rows but the field has {}",
            span_rows + 1,
            field.rows()
        )));
    }
    let length = field.length();
    let interval = spec.cadence_rows as f64 * field.dt;
    let (h, w) = (spec.window, cols.len());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::new();
    let mut r0 = 0;
    while r0 + span_rows < field.rows() {
        let mut speed = Vec::with_capacity(h * w);
        let mut flow = Vec::with_capacity(h * w);
        let mut observed = Vec::with_capacity(h * w);
        for k in 0..h {
            let row = r0 + k * spec.cadence_rows;
            for (ci, &c) in cols.iter().enumerate() {
                let (v, q) = (field.speed_at(row, c), field.flow_at(row, c));
                speed.push(v);
                flow.push(q);
                observed.push(ObservedPoint {
                    coord: QueryCoordinate {
                        x: positions[ci] / length,
                        t: k as f64 / (h - 1) as f64,
                    },
                    flow: q,
                    speed: v,
                });
            }
        }
        out.push(TrainSample {
            window: MeasurementWindow {
                t0: r0 as f64 * field.dt,
                interval,
                length,
                positions: positions.clone(),
                rows: h,
                cols: w,
                speed,
                flow,
            },
            collocation: draw_collocation(&mut rng, spec.collocation),
            observed,
            anchor_row: r0,
            row_step: spec.cadence_rows,
        });
        r0 += spec.stride * spec.cadence_rows;
    }
    Ok(out)
}

/// Uniform i.i.d. points in the unit square.
pub fn draw_collocation(rng: &mut impl Rng, count: usize) -> Vec<QueryCoordinate> {
    (0..count)
        .map(|_| QueryCoordinate {
            x: rng.random::<f64>(),
            t: rng.random::<f64>(),
        })
        .collect()
}

/// Replaces every sample's collocation set with fresh draws from `seed`.
pub fn resample_collocation(samples: &mut [TrainSample], count: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in samples {
        s.collocation = draw_collocation(&mut rng, count);
    }
}

/// Contiguous split into train, validation and test parts in input order.
pub fn split_dataset<T>(
    mut items: Vec<T>,
    ratios: (f64, f64, f64),
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let (a, b, c) = ratios;
    if [a, b, c].iter().any(|r| !(r.is_finite() && *r >= 0.0)) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be nonnegative and sum to 1, got ({a}, {b}, {c})"
        )));
    }
    let n = items.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!(
            "need at least 10 samples to split, got {n}"
        )));
    }
    let n_train = (a * n as f64).round() as usize;
    let n_val = ((b * n as f64).round() as usize).min(n - n_train);
    let test = items.split_off(n_train + n_val);
    let val = items.split_off(n_train);
    Ok((items, val, test))
}

/// Per-variable z-score statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub speed_mean: f64,
    pub speed_std: f64,
    pub flow_mean: f64,
    pub flow_std: f64,
}

impl NormStats {
    pub const IDENTITY: NormStats = NormStats {
        speed_mean: 0.0,
        speed_std: 1.0,
        flow_mean: 0.0,
        flow_std: 1.0,
    };

    /// Pooled statistics over every cell of the given windows.
    pub fn from_windows<'a>(windows: impl IntoIterator<Item = &'a MeasurementWindow>) -> Result<Self> {
        let (mut n, mut sv, mut sq) = (0usize, 0.0, 0.0);
        let mut all: Vec<&MeasurementWindow> = Vec::new();
        for w in windows {
            n += w.speed.len();
            sv += w.speed.iter().sum::<f64>();
            sq += w.flow.iter().sum::<f64>();
            all.push(w);
        }
        if n == 0 {
            return Err(Error::InsufficientData("no windows to compute statistics".into()));
        }
        let (mv, mq) = (sv / n as f64, sq / n as f64);
        let (mut vv, mut vq) = (0.0, 0.0);
        for w in &all {
            vv += w.speed.iter().map(|x| (x - mv).powi(2)).sum::<f64>();
            vq += w.flow.iter().map(|x| (x - mq).powi(2)).sum::<f64>();
        }
        let (sdv, sdq) = ((vv / n as f64).sqrt(), (vq / n as f64).sqrt());
        if sdv <= 1e-12 * mv.abs().max(1.0) {
            return Err(Error::ZeroVariance("speed"));
        }
        if sdq <= 1e-12 * mq.abs().max(1.0) {
            return Err(Error::ZeroVariance("flow"));
        }
        Ok(Self {
            speed_mean: mv,
            speed_std: sdv,
            flow_mean: mq,
            flow_std: sdq,
        })
    }

    pub fn from_samples(samples: &[TrainSample]) -> Result<Self> {
        Self::from_windows(samples.iter().map(|s| &s.window))
    }

    pub fn norm_speed(&self, v: f64) -> f64 {
        (v - self.speed_mean) / self.speed_std
    }

    pub fn denorm_speed(&self, v: f64) -> f64 {
        v * self.speed_std + self.speed_mean
    }

    pub fn norm_flow(&self, q: f64) -> f64 {
        (q - self.flow_mean) / self.flow_std
    }

    pub fn denorm_flow(&self, q: f64) -> f64 {
        q * self.flow_std + self.flow_mean
    }

    pub fn normalize_window(&self, w: &MeasurementWindow) -> MeasurementWindow {
        MeasurementWindow {
            speed: w.speed.iter().map(|&v| self.norm_speed(v)).collect(),
            flow: w.flow.iter().map(|&q| self.norm_flow(q)).collect(),
            ..w.clone()
        }
    }

    pub fn denormalize_window(&self, w: &MeasurementWindow) -> MeasurementWindow {
        MeasurementWindow {
            speed: w.speed.iter().map(|&v| self.denorm_speed(v)).collect(),
            flow: w.flow.iter().map(|&q| self.denorm_flow(q)).collect(),
            ..w.clone()
        }
    }

    /// Normalized `(speed, flow)` grids of a field.
    pub fn normalize_field(&self, f: &GroundTruthField) -> (Vec<f64>, Vec<f64>) {
        (
            f.speed().iter().map(|&v| self.norm_speed(v)).collect(),
            f.flow().iter().map(|&q| self.norm_flow(q)).collect(),
        )
    }

    /// Inverse of [`NormStats::normalize_field`] on the lattice of `like`.
    pub fn denormalize_field(
        &self,
        like: &GroundTruthField,
        speed: &[f64],
        flow: &[f64],
    ) -> Result<GroundTruthField> {
        GroundTruthField::new(
            like.units,
            like.dx,
            like.dt,
            like.rows(),
            like.cols(),
            speed.iter().map(|&v| self.denorm_speed(v)).collect(),
            flow.iter().map(|&q| self.denorm_flow(q)).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::UnitSystem;

    fn ramp_field(rows: usize, cols: usize) -> GroundTruthField {
        let speed = (0..rows * cols).map(|k| 30.0 + k as f64).collect();
        let flow = (0..rows * cols).map(|k| 0.5 + 0.01 * k as f64).collect();
        GroundTruthField::new(UnitSystem::NGSIM, 20.0, 5.0, rows, cols, speed, flow).unwrap()
    }

    #[test]
    fn two_sensors_two_instants_give_four_observed_points() {
        let f = ramp_field(6, 5);
        let layout = SensorLayout::from_positions(&[0.0, 80.0], &[40.0], 80.0).unwrap();
        let spec = SampleSpec {
            window: 2,
            cadence_rows: 1,
            collocation: 3,
            stride: 1,
            seed: 1,
        };
        let s = build_samples(&f, &layout, &spec).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s[0].observed.len(), 4);
        for sample in &s {
            for p in &sample.observed {
                let row = sample.anchor_row + (p.coord.t * (sample.window.rows - 1) as f64).round() as usize;
                let col = f.column_of(p.coord.x * f.length()).unwrap();
                assert_eq!(p.speed, f.speed_at(row, col));
                assert_eq!(p.flow, f.flow_at(row, col));
            }
        }
    }

    #[test]
    fn zero_collocation_and_determinism() {
        let f = ramp_field(10, 5);
        let layout = SensorLayout::from_positions(&[0.0, 40.0, 80.0], &[], 80.0).unwrap();
        let mut spec = SampleSpec {
            window: 4,
            cadence_rows: 2,
            collocation: 0,
            stride: 1,
            seed: 9,
        };
        let s = build_samples(&f, &layout, &spec).unwrap();
        assert!(s.iter().all(|x| x.collocation.is_empty()));
        assert_eq!(s[1].anchor_row, 2);
        assert_eq!(s[0].window.span(), 30.0);
        spec.collocation = 16;
        let a = build_samples(&f, &layout, &spec).unwrap();
        let b = build_samples(&f, &layout, &spec).unwrap();
        assert_eq!(a, b);
        assert!(a[0]
            .collocation
            .iter()
            .all(|c| (0.0..=1.0).contains(&c.x) && (0.0..=1.0).contains(&c.t)));
        spec.window = 6;
        assert!(matches!(
            build_samples(&f, &layout, &spec),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn chronological_splits() {
        let (a, b, c) = split_dataset((0..10).collect(), (0.7, 0.1, 0.2)).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (7, 1, 2));
        assert!(a.last() < b.first() && b.last() < c.first());
        let (a, b, c) = split_dataset((0..20).collect(), (0.7, 0.1, 0.2)).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (14, 2, 4));
        assert!(split_dataset((0..20).collect::<Vec<_>>(), (0.7, 0.2, 0.2)).is_err());
        assert!(split_dataset((0..9).collect::<Vec<_>>(), (0.7, 0.1, 0.2)).is_err());
    }

    fn window(speed: Vec<f64>, flow: Vec<f64>) -> MeasurementWindow {
        MeasurementWindow {
            t0: 0.0,
            interval: 5.0,
            length: 100.0,
            positions: vec![0.0, 100.0],
            rows: speed.len() / 2,
            cols: 2,
            speed,
            flow,
        }
    }

    #[test]
    fn zero_variance_is_rejected() {
        let w = window(vec![50.0; 4], vec![0.1, 0.2, 0.3, 0.4]);
        let err = NormStats::from_windows([&w]).unwrap_err();
        assert!(err.to_string().contains("zero variance"));
    }

    #[test]
    fn identity_stats_and_round_trip() {
        let w = window(vec![10.0, 20.0, 30.0, 45.5], vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(NormStats::IDENTITY.normalize_window(&w), w);
        let stats = NormStats::from_windows([&w]).unwrap();
        let back = stats.denormalize_window(&stats.normalize_window(&w));
        for (a, b) in back.speed.iter().zip(&w.speed).chain(back.flow.iter().zip(&w.flow)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
