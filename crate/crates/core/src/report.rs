//! Output files, the run manifest and manifest replay.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ann::ParamVector;
use crate::config::RunConfig;
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const MANIFEST_SCHEMA: u32 = 1;

/// One generated file, addressed relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub path: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(path: impl Into<String>, bytes: impl Into<Vec<u8>>) -> Self {
        Artifact {
            path: path.into(),
            bytes: bytes.into(),
        }
    }

    pub fn json<T: Serialize>(path: impl Into<String>, value: &T) -> Result<Self> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        Ok(Self::new(path, bytes))
    }

    /// One JSON value per line.
    pub fn json_lines<T: Serialize>(path: impl Into<String>, rows: &[T]) -> Result<Self> {
        let mut bytes = Vec::new();
        for r in rows {
            serde_json::to_writer(&mut bytes, r)?;
            bytes.push(b'\n');
        }
        Ok(Self::new(path, bytes))
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_fingerprint: String,
    pub quadrature_fingerprint: String,
    pub config: RunConfig,
    #[serde(default)]
    pub theta: Option<ParamVector>,
    pub outputs: Vec<OutputEntry>,
    pub passed: bool,
    pub wall_seconds: f64,
}

/// Writes the artifacts and a manifest into `dir`; returns the manifest path.
pub fn write_report(
    dir: &Path,
    command: &str,
    config: &RunConfig,
    theta: Option<&ParamVector>,
    artifacts: &[Artifact],
    passed: bool,
    wall_seconds: f64,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut outputs = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        if Path::new(&a.path).is_absolute() || a.path.split('/').any(|c| c == "..") || a.path == MANIFEST_NAME {
            return Err(Error::InvalidArgument(format!("artifact path `{}` must be relative", a.path)));
        }
        let p = dir.join(&a.path);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&p, &a.bytes)?;
        outputs.push(OutputEntry {
            path: a.path.clone(),
            sha256: a.sha256(),
            bytes: a.bytes.len(),
        });
    }
    let m = Manifest {
        schema_version: MANIFEST_SCHEMA,
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        seed: config.seed,
        config_fingerprint: config.fingerprint(),
        quadrature_fingerprint: config.quadrature().fingerprint(),
        config: config.clone(),
        theta: theta.cloned(),
        outputs,
        passed,
        wall_seconds,
    };
    let path = dir.join(MANIFEST_NAME);
    let mut bytes = serde_json::to_vec_pretty(&m)?;
    bytes.push(b'\n');
    std::fs::write(&path, bytes)?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let m: Manifest = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    m.config.validate()?;
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub path: String,
    pub expected: String,
    pub actual: Option<String>,
}

impl ReplayEntry {
    pub fn matches(&self) -> bool {
        self.actual.as_deref() == Some(self.expected.as_str())
    }
}

/// Compares recorded output hashes against freshly produced artifacts.
pub fn compare_outputs(manifest: &Manifest, fresh: &[Artifact]) -> Vec<ReplayEntry> {
    manifest
        .outputs
        .iter()
        .map(|o| ReplayEntry {
            path: o.path.clone(),
            expected: o.sha256.clone(),
            actual: fresh.iter().find(|a| a.path == o.path).map(Artifact::sha256),
        })
        .collect()
}
