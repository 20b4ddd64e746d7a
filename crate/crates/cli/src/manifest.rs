//! Run manifests: every command records what it read, what it wrote and the
//! hash of each output, so a run can be re-verified later.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Hash of the canonical serialized configuration; stable across reruns
    /// of the same config.
    pub config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub created_unix: u64,
    pub outputs: Vec<OutputEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_string(&hasher.finalize())
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, config_bytes: &[u8], seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(config_bytes),
            seed,
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs: Vec::new(),
        }
    }

    /// Hashes and records an output file (path taken relative to `base`).
    pub fn record(&mut self, base: &Path, path: &Path) -> std::io::Result<()> {
        let rel = path
            .strip_prefix(base)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned();
        self.outputs.push(OutputEntry {
            path: rel,
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join("manifest.json");
        fs::write(
            &path,
            serde_json::to_vec_pretty(self).expect("serializable"),
        )?;
        Ok(path)
    }
}

/// Re-hashes every file listed in a manifest. Returns the mismatches.
pub fn verify_manifest(manifest_path: &Path) -> std::io::Result<Vec<String>> {
    let bytes = fs::read(manifest_path)?;
    let manifest: RunManifest = serde_json::from_slice(&bytes).map_err(|e| {
        std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("bad manifest: {e}"),
        )
    })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut mismatches = Vec::new();
    for entry in &manifest.outputs {
        let path = base.join(&entry.path);
        match sha256_file(&path) {
            Ok(h) if h == entry.sha256 => {}
            Ok(_) => mismatches.push(format!("{}: hash changed", entry.path)),
            Err(e) => mismatches.push(format!("{}: {e}", entry.path)),
        }
    }
    Ok(mismatches)
}
