use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use tse_core::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Config echo and content hashes of one run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            config,
            ..Self::default()
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let hash = file_hash(path).map_err(|e| Error::Config(format!("cannot read input {}: {e}", path.display())))?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    /// Records every output by its path relative to `out`.
    pub fn finish(mut self, out: &Path, outputs: &[PathBuf]) -> Result<PathBuf> {
        for p in outputs {
            let key = p.strip_prefix(out).unwrap_or(p).display().to_string();
            self.outputs.insert(key, file_hash(p)?);
        }
        let path = out.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self)? + "\n")?;
        Ok(path)
    }
}
