//! Record of completed stages: for each stage, a hash of its inputs and of
//! every file it wrote. A stage whose inputs and outputs still match is not
//! run again.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub input: String,
    /// Output path relative to the artifact root, mapped to its SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    /// Loads `root/manifest.json`, or an empty manifest if there is none.
    pub fn load(root: &Path) -> Result<Self, CliError> {
        let path = root.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// Writes through a temporary file so a crash never leaves a torn manifest.
    pub fn save(&self, root: &Path) -> Result<(), CliError> {
        let tmp = root.join(format!("{MANIFEST_FILE}.tmp"));
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(tmp, root.join(MANIFEST_FILE))?;
        Ok(())
    }

    /// True if `key` was completed with `input` and its outputs are untouched.
    pub fn is_fresh(&self, root: &Path, key: &str, input: &str) -> Result<bool, CliError> {
        let Some(record) = self.stages.get(key) else {
            return Ok(false);
        };
        if record.input != input {
            return Ok(false);
        }
        for (rel, hash) in &record.outputs {
            let path = root.join(rel);
            if !path.is_file() || &file_sha256(&path)? != hash {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn output_hash(&self, key: &str, rel: &str) -> Option<&str> {
        self.stages.get(key)?.outputs.get(rel).map(String::as_str)
    }

    /// Hash over all outputs of `key`, usable as an input of later stages.
    pub fn stage_digest(&self, key: &str) -> Option<String> {
        let record = self.stages.get(key)?;
        Some(json_sha256(&record.outputs))
    }

    pub fn record(&mut self, root: &Path, key: &str, input: String, outputs: &[PathBuf]) -> Result<(), CliError> {
        let mut hashes = BTreeMap::new();
        for rel in outputs {
            hashes.insert(rel_key(rel), file_sha256(&root.join(rel))?);
        }
        self.stages.insert(key.to_owned(), StageRecord { input, outputs: hashes });
        Ok(())
    }
}

/// Forward-slash form of a relative path, stable across platforms.
pub fn rel_key(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn bytes_sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the compact JSON encoding of `value`.
pub fn json_sha256<T: Serialize + ?Sized>(value: &T) -> String {
    bytes_sha256(&serde_json::to_vec(value).expect("stage inputs serialize"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn freshness_tracks_input_and_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        std::fs::write(root.join("a.bin"), b"one").unwrap();
        let mut m = Manifest::default();
        m.record(root, "s", "in".into(), &[PathBuf::from("a.bin")]).unwrap();
        assert!(m.is_fresh(root, "s", "in").unwrap());
        assert!(!m.is_fresh(root, "s", "other").unwrap());
        assert!(!m.is_fresh(root, "t", "in").unwrap());
        std::fs::write(root.join("a.bin"), b"two").unwrap();
        assert!(!m.is_fresh(root, "s", "in").unwrap());
        std::fs::remove_file(root.join("a.bin")).unwrap();
        assert!(!m.is_fresh(root, "s", "in").unwrap());
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x"), b"x").unwrap();
        let mut m = Manifest::default();
        m.record(dir.path(), "k", "i".into(), &[PathBuf::from("x")]).unwrap();
        m.save(dir.path()).unwrap();
        assert_eq!(Manifest::load(dir.path()).unwrap(), m);
        assert_eq!(m.output_hash("k", "x"), Some(bytes_sha256(b"x").as_str()));
    }

    #[test]
    fn rel_key_uses_forward_slashes() {
        assert_eq!(rel_key(&Path::new("models").join("a").join("b.bin")), "models/a/b.bin");
    }
}
