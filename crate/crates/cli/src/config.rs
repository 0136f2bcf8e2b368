use std::path::Path;

use serde::{Deserialize, Serialize};
use tse_core::baselines::{AsConfig, PinnConfig};
use tse_core::nets::ModelConfig;
use tse_core::sim::ScenarioConfig;
use tse_core::train::TrainConfig;
use tse_core::{Error, Result};

/// How the field is cut into windows and split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Sensing instants per window.
    pub window: usize,
    /// Sensing intervals between consecutive window anchors.
    pub stride: usize,
    /// Collocation points per window.
    pub collocation: usize,
    /// Chronological train, validation and test fractions.
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            window: 12,
            stride: 1,
            collocation: 128,
            ratios: [0.7, 0.1, 0.2],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub counts: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { counts: vec![3, 6, 11] }
    }
}

/// One experiment: a scenario plus everything needed to train and score
/// methods on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub pinn: PinnConfig,
    /// Adaptive smoothing parameters; canonical values when absent.
    #[serde(default)]
    pub smoothing: Option<AsConfig>,
    #[serde(default)]
    pub sweep: SweepConfig,
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back
/// to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Applies one dotted `key=value` override to a TOML tree.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Parses `text`, applies overrides in order, then the seed.
    pub fn from_toml(text: &str, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut root: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        let mut cfg: RunConfig = root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let Some(s) = seed {
            cfg.set_seed(s);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides, seed)
    }

    /// Seeds every stochastic stage except the scenario's measurement noise.
    pub fn set_seed(&mut self, seed: u64) {
        self.dataset.seed = seed;
        self.model.seed = seed;
        self.train.seed = seed;
        self.pinn.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.train.validate()?;
        let d = &self.dataset;
        if d.window < 2 || d.stride == 0 {
            return Err(Error::Config("dataset window must be at least 2 and stride at least 1".into()));
        }
        if self.sweep.counts.iter().any(|c| *c < 2) {
            return Err(Error::Config("sweep sensor counts must be at least 2".into()));
        }
        Ok(())
    }

    /// Model config with the window, sensor count and units tied to the
    /// dataset and scenario.
    pub fn model_for(&self, sensors: usize) -> ModelConfig {
        ModelConfig {
            window: self.dataset.window,
            sensors,
            units: self.scenario.units,
            ..self.model.clone()
        }
    }

    /// Field rows per sensing interval.
    pub fn cadence_rows(&self) -> Result<usize> {
        let r = self.scenario.sensors.cadence / self.scenario.output_dt;
        if (r - r.round()).abs() > 1e-9 || r.round() < 1.0 {
            return Err(Error::Config(format!(
                "sensor cadence {} is not a multiple of the output step {}",
                self.scenario.sensors.cadence, self.scenario.output_dt
            )));
        }
        Ok(r.round() as usize)
    }

    pub fn smoothing(&self) -> Result<AsConfig> {
        Ok(self
            .smoothing
            .unwrap_or_else(|| AsConfig::defaults(&self.scenario.units, self.scenario.sensors.cadence)))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
