use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one command run: what went in, what came out, and the
/// effective configuration. `wall_clock_s` is the only field that varies
/// between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: Value,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Hashes of the manifests of upstream runs this one consumed.
    pub upstream_manifests: Vec<FileDigest>,
    pub wall_clock_s: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path, shown_as: String) -> Result<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: shown_as,
        sha256: sha256_hex(&bytes),
    })
}

/// Digest of an upstream manifest with its wall-clock time zeroed, so that
/// lineage hashes repeat across identical runs.
pub fn digest_manifest(path: &Path, shown_as: String) -> Result<FileDigest> {
    let mut m = Manifest::read(path)?;
    m.wall_clock_s = 0.0;
    Ok(FileDigest {
        path: shown_as,
        sha256: sha256_hex(serde_json::to_string_pretty(&m).expect("manifest serializes").as_bytes()),
    })
}

/// Digests files under `root`, each listed by its path relative to `root`.
pub fn digest_relative(root: &Path, files: &[PathBuf]) -> Result<Vec<FileDigest>> {
    let mut out = files
        .iter()
        .map(|f| {
            let shown = f.strip_prefix(root).unwrap_or(f).to_string_lossy().replace('\\', "/");
            digest_file(f, shown)
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Digests input files; paths are listed by file name only so that moving a
/// dataset does not change the manifest.
pub fn digest_inputs(files: &[PathBuf]) -> Result<Vec<FileDigest>> {
    let mut out = files
        .iter()
        .map(|f| {
            let shown = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            digest_file(f, shown)
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.path.cmp(&b.path).then(a.sha256.cmp(&b.sha256)));
    Ok(out)
}

impl Manifest {
    pub fn new(command: &str, config: Value, seeds: Vec<u64>) -> Self {
        let canonical = serde_json::to_string(&config).expect("json values serialize");
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: sha256_hex(canonical.as_bytes()),
            config,
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
            upstream_manifests: Vec::new(),
            wall_clock_s: 0.0,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, body + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_is_canonical() {
        let a = Manifest::new("x", serde_json::json!({"b": 1, "a": 2}), vec![]);
        let b = Manifest::new("x", serde_json::json!({"a": 2, "b": 1}), vec![]);
        assert_eq!(a.config_hash, b.config_hash);
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_digest_ignores_wall_clock() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::new("x", serde_json::json!({}), vec![1]);
        m.wall_clock_s = 1.5;
        let path = m.write(dir.path()).unwrap();
        let a = digest_manifest(&path, "m".into()).unwrap();
        m.wall_clock_s = 7.0;
        m.write(dir.path()).unwrap();
        assert_eq!(a, digest_manifest(&path, "m".into()).unwrap());
    }
}
