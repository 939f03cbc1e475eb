//! Run manifests: what was run, with which seeds and inputs, and digests of
//! everything that was written.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub root_seed: u64,
    /// Names of the random streams derived from `root_seed`.
    pub streams: Vec<String>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the manifest's directory.
    pub artifacts: Vec<FileDigest>,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

impl RunManifest {
    pub fn new(command: &str, root_seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            tool: "sepll".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            root_seed,
            streams: Stream::ALL.iter().map(|s| s.name().to_string()).collect(),
            config,
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    /// Records a file, or every regular file directly inside a directory.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            for p in entries {
                self.push_input(&p)?;
            }
            Ok(())
        } else {
            self.push_input(path)
        }
    }

    fn push_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Records an artifact written under `out_dir`.
    pub fn add_artifact(&mut self, out_dir: &Path, relative: &str) -> Result<()> {
        self.artifacts.push(FileDigest {
            path: relative.to_string(),
            sha256: sha256_file(&out_dir.join(relative))?,
        });
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, format!("line {}", e.line()), e))
    }

    /// Re-hashes every artifact relative to `out_dir`.
    pub fn verify(&self, out_dir: &Path) -> Result<()> {
        for a in &self.artifacts {
            let actual = sha256_file(&out_dir.join(&a.path))?;
            if actual != a.sha256 {
                return Err(Error::Data(format!("{}: digest mismatch", a.path)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn verify_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), "hello").unwrap();
        let mut m = RunManifest::new("train", 3, serde_json::json!({"k": 1}));
        m.add_artifact(dir.path(), "a.txt").unwrap();
        m.verify(dir.path()).unwrap();
        m.write(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(RunManifest::read(&dir.path().join("manifest.json")).unwrap(), m);
        fs::write(dir.path().join("a.txt"), "hellO").unwrap();
        assert!(m.verify(dir.path()).is_err());
    }
}
