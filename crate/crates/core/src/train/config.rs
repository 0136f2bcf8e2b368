use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::LossWeights;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    /// Samples per optimizer step.
    pub batch_size: usize,
    /// Collocation points per sample when resampling.
    pub collocation: usize,
    pub weights: LossWeights,
    pub seed: u64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Draw fresh collocation points at the start of every epoch.
    pub resample: bool,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 500,
            batch_size: 8,
            collocation: 512,
            weights: LossWeights::default(),
            seed: 0,
            patience: 30,
            resample: true,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be nonnegative, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        if self.batch_size == 0 || self.patience == 0 || self.epochs == 0 {
            return Err(Error::Config("epochs, batch_size and patience must be at least 1".into()));
        }
        self.weights.validate()
    }
}
