use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::model::{ExtendedModel, Geometry};
use crate::autodiff::{Array, ParamSet};
use crate::error::{Error, Result};
use crate::physics::FieldModel;

const MAGIC: &str = "tse-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct NamedArray {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Self-describing weight container.
///
/// On disk: a header line `tse-checkpoint <version> sha256:<hex>` followed
/// by a JSON body whose digest the header records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Model family, e.g. `extended`, `vanilla`, `pinn`.
    pub kind: String,
    pub config: serde_json::Value,
    pub geometry: Option<Geometry>,
    params: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn new(kind: &str, config: serde_json::Value, geometry: Option<Geometry>, params: &ParamSet) -> Self {
        Self {
            kind: kind.to_string(),
            config,
            geometry,
            params: params
                .iter()
                .map(|(name, a)| NamedArray {
                    name: name.to_string(),
                    shape: a.shape().to_vec(),
                    data: a.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn params(&self) -> Result<ParamSet> {
        let mut set = ParamSet::new();
        for p in &self.params {
            set.insert(p.name.clone(), Array::new(&p.shape, p.data.clone())?)?;
        }
        Ok(set)
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn to_text(&self) -> Result<String> {
        let body = serde_json::to_string(self)?;
        let digest = hex(&Sha256::digest(body.as_bytes()));
        Ok(format!("{MAGIC} {CHECKPOINT_VERSION} sha256:{digest}\n{body}"))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (header, body) = text
            .split_once('\n')
            .ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
        let mut it = header.split(' ');
        if it.next() != Some(MAGIC) {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version: u32 = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Checkpoint("unreadable version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let want = it
            .next()
            .and_then(|d| d.strip_prefix("sha256:"))
            .ok_or_else(|| Error::Checkpoint("missing checksum".into()))?;
        let got = hex(&Sha256::digest(body.as_bytes()));
        if got != want {
            return Err(Error::Checkpoint(format!("checksum mismatch: header {want}, body {got}")));
        }
        Ok(serde_json::from_str(body)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl ExtendedModel {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint::new(
            self.config().variant.name(),
            serde_json::to_value(self.config())?,
            self.geometry().copied(),
            self.params(),
        ))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config: ModelConfig = serde_json::from_value(ck.config.clone())
            .map_err(|e| Error::Checkpoint(format!("config echo: {e}")))?;
        Self::from_parts(config, ck.params()?, ck.geometry)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Replaces weights and geometry with those stored at `path`, which must
    /// come from a structurally identical config.
    pub fn load_into(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let other = Self::load(path)?;
        let diff = self.config().structural_diff(other.config());
        if !diff.is_empty() {
            return Err(Error::ConfigMismatch(diff.join("; ")));
        }
        *self = other;
        Ok(())
    }
}
