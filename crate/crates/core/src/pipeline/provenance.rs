use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const PROVENANCE_FILE: &str = "provenance.json";

/// Record written next to a stage's artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub stage: String,
    pub tool_version: String,
    /// Hash of the stage's inputs: its configuration, upstream digests and
    /// the tool version. A cache entry is reused only when this matches.
    pub key: String,
    pub config_hash: String,
    /// The configuration values the stage read, enough to rebuild it.
    pub config: serde_json::Value,
    /// Upstream stage name to that stage's digest.
    pub upstream: BTreeMap<String, String>,
    pub artifacts: Vec<Artifact>,
    /// Hash over the artifact hashes; what downstream stages record.
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    /// Relative to the stage directory unless absolute.
    pub path: PathBuf,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> io::Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn json_hash(value: &serde_json::Value) -> String {
    sha256_hex(value.to_string().as_bytes())
}

pub fn stage_key(stage: &str, config: &serde_json::Value, upstream: &BTreeMap<String, String>) -> String {
    let v = serde_json::json!({
        "stage": stage,
        "tool_version": TOOL_VERSION,
        "config": config,
        "upstream": upstream,
    });
    json_hash(&v)
}

impl Provenance {
    pub fn new(
        stage: &str,
        config: serde_json::Value,
        upstream: BTreeMap<String, String>,
        artifacts: Vec<Artifact>,
    ) -> Self {
        let key = stage_key(stage, &config, &upstream);
        let config_hash = json_hash(&config);
        let digest = Self::digest_of(&artifacts);
        Self { stage: stage.to_string(), tool_version: TOOL_VERSION.into(), key, config_hash, config, upstream, artifacts, digest }
    }

    fn digest_of(artifacts: &[Artifact]) -> String {
        let mut h = Sha256::new();
        for a in artifacts {
            h.update(a.path.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(a.sha256.as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn resolve(dir: &Path, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            dir.join(path)
        }
    }

    pub fn read(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(PROVENANCE_FILE);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(dir.join(PROVENANCE_FILE), text + "\n")?;
        Ok(())
    }

    /// First artifact whose content no longer matches its recorded hash
    /// (or has vanished).
    pub fn first_mismatch(&self, dir: &Path) -> Option<PathBuf> {
        self.artifacts.iter().find_map(|a| {
            let p = Self::resolve(dir, &a.path);
            match hash_file(&p) {
                Ok(h) if h == a.sha256 => None,
                _ => Some(p),
            }
        })
    }
}
