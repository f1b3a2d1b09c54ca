use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the resolved configuration (overrides applied).
    pub config_sha256: String,
    pub version: String,
    /// SHA-256 per output file, by file name.
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_s: f64,
    /// Integrator steps of the recorded runs, when the command records any.
    pub steps: Option<usize>,
}

impl RunManifest {
    pub fn new(command: &str, canonical_config: &str) -> Self {
        RunManifest {
            command: command.into(),
            config_sha256: sha256_hex(canonical_config.as_bytes()),
            version: env!("CARGO_PKG_VERSION").into(),
            outputs: BTreeMap::new(),
            wall_clock_s: 0.0,
            steps: None,
        }
    }
}
