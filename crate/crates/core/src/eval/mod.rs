//! Metrics, per-method evaluation reports, sensitivity sweeps and heatmaps.

mod heatmap;
mod metrics;
mod report;
mod sweep;

pub use heatmap::{export_heatmap, reconstruct_field};
pub use metrics::{re, rmse};
pub use report::{
    evaluate_method, histogram_bin, EvalMeta, EvalReport, Estimator, Histogram, SensorErrors,
    VariableMetrics, HISTOGRAM_BINS, HISTOGRAM_BIN_WIDTH,
};
pub use sweep::{sensor_sensitivity_sweep, EstimatorBuilder, SweepSetup};
