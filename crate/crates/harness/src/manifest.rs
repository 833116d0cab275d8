//! Run manifests: every artifact-producing command writes one next to its
//! outputs so a run can be reproduced from the manifest alone.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::scenario::Scenario;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// Producing command (`collect`, `train`, `run`, `sweep`).
    pub command: String,
    pub package_version: String,
    pub created_unix_s: u64,
    pub config_hash: String,
    pub seed: u64,
    /// Full scenario record for `run`; absent for `collect`/`train`.
    pub scenario: Option<Scenario>,
    /// Input files with their content hashes.
    pub inputs: Vec<FileRef>,
    /// Files this run produced.
    pub outputs: Vec<FileRef>,
    /// Always set: results come from the simulated plant, not hardware.
    pub simulated_plant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest parse error: {0}")]
    Parse(#[from] toml::de::Error),
}

pub fn file_sha256(path: &Path) -> Result<String, ManifestError> {
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

pub fn file_ref(path: &Path) -> Result<FileRef, ManifestError> {
    Ok(FileRef {
        path: path.display().to_string(),
        sha256: file_sha256(path)?,
    })
}

impl Manifest {
    pub fn new(command: &str, config_hash: String, seed: u64) -> Self {
        Manifest {
            format_version: MANIFEST_VERSION,
            command: command.to_string(),
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config_hash,
            seed,
            scenario: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            simulated_plant: true,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let text = toml::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("file.csv");
        std::fs::write(&out, "a,b\n1,2\n").unwrap();
        let mut m = Manifest::new("run", "deadbeef".into(), 7);
        m.scenario = Some(crate::scenario::builtin("wrench", 7).unwrap());
        m.outputs.push(file_ref(&out).unwrap());
        let path = dir.path().join("manifest.toml");
        m.save(&path).unwrap();
        let back = Manifest::load(&path).unwrap();
        assert_eq!(m, back);
        assert!(back.simulated_plant);
    }

    #[test]
    fn file_hash_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        std::fs::write(&p, "one").unwrap();
        let h1 = file_sha256(&p).unwrap();
        std::fs::write(&p, "two").unwrap();
        assert_ne!(h1, file_sha256(&p).unwrap());
    }
}
