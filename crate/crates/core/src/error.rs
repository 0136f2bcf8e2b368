use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("loss must be scalar-shaped, got {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("graph cycle detected at node {0}")]
    Cycle(usize),
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing units")]
    MissingUnits,
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("nonpositive density {0} passed to the fundamental diagram")]
    NonPositiveDensity(f64),
    #[error("nonpositive observed speed {0}")]
    NonPositiveSpeed(f64),
    #[error("CFL condition violated: dt = {dt} s exceeds the stable limit {limit:.6} s (suggested dt <= {limit:.6})")]
    Cfl { dt: f64, limit: f64 },
    #[error("simulation blew up at step {0}")]
    BlowUp(usize),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("input and evaluation sensor sets overlap at positions {0:?}")]
    SensorOverlap(Vec<f64>),
    #[error("sensor at {0} is not on the grid")]
    OffGrid(f64),
    #[error("model has no normalization statistics; train it first")]
    Untrained,
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
