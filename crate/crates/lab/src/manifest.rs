use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the canonical JSON form of the run configuration.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub config: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl Manifest {
    pub fn new(command: &str, config: &impl Serialize, seeds: Vec<u64>) -> Self {
        let config = serde_json::to_value(config).expect("config serializes");
        let canonical = serde_json::to_string(&config).expect("value serializes");
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: sha256_hex(canonical.as_bytes()),
            seeds,
            config,
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self).expect("manifest serializes"))
    }

    /// For single-file outputs: `model.json` gets `model.json.manifest.json`.
    pub fn write_beside(&self, file: &Path) -> std::io::Result<()> {
        let mut name = file.as_os_str().to_owned();
        name.push(".manifest.json");
        std::fs::write(Path::new(&name), serde_json::to_string_pretty(self).expect("manifest serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn hash_follows_config() {
        let a = Manifest::new("sweep", &serde_json::json!({"seeds": 3}), vec![1, 2, 3]);
        let b = Manifest::new("sweep", &serde_json::json!({"seeds": 3}), vec![1, 2, 3]);
        let c = Manifest::new("sweep", &serde_json::json!({"seeds": 4}), vec![1, 2, 3]);
        assert_eq!(a.config_hash, b.config_hash);
        assert_ne!(a.config_hash, c.config_hash);
    }
}
