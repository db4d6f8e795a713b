//! Run manifests: enough to reconstruct where every output came from.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Inputs: the path as given. Outputs: relative to the manifest's
    /// directory.
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub uasim: String,
    pub uatv_format: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub deterministic: bool,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_hash: String,
    pub config: serde_json::Value,
    pub versions: Versions,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path, recorded: PathBuf) -> Result<FileDigest> {
    let mut f = std::fs::File::open(path).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
        bytes += n as u64;
    }
    let sha256 = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(FileDigest { path: recorded, bytes, sha256 })
}

/// Digests of the input files, taken before a run may overwrite them.
pub fn digest_inputs(inputs: &[PathBuf]) -> Result<Vec<FileDigest>> {
    inputs.iter().map(|p| digest_file(p, p.clone())).collect()
}

impl Manifest {
    pub fn build(
        command: &str,
        cfg: &ExperimentConfig,
        deterministic: bool,
        inputs: Vec<FileDigest>,
        out_dir: &Path,
        outputs: &[String],
    ) -> Result<Self> {
        let canonical = cfg.canonical_json();
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            seed: cfg.seed,
            deterministic,
            config_hash: sha256_hex(canonical.as_bytes()),
            config: serde_json::from_str(&canonical)?,
            versions: Versions { uasim: env!("CARGO_PKG_VERSION").to_string(), uatv_format: uasim_core::uatv::VERSION },
            inputs,
            outputs: outputs.iter().map(|o| digest_file(&out_dir.join(o), PathBuf::from(o))).collect::<Result<_>>()?,
        })
    }

    pub fn path_for(out_dir: &Path, command: &str) -> PathBuf {
        out_dir.join(format!("{command}.manifest.json"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Checks the schema version, the configuration hash and the checksum of
    /// every output. Returns one message per problem.
    pub fn verify(&self, manifest_path: &Path) -> Vec<String> {
        let mut problems = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            problems.push(format!("schema version {} is not {SCHEMA_VERSION}", self.schema_version));
        }
        match serde_json::from_value::<ExperimentConfig>(self.config.clone()) {
            Ok(cfg) if sha256_hex(cfg.canonical_json().as_bytes()) == self.config_hash => {}
            Ok(_) => problems.push("configuration hash does not match the recorded configuration".into()),
            Err(e) => problems.push(format!("recorded configuration does not parse: {e}")),
        }
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        for o in &self.outputs {
            match digest_file(&dir.join(&o.path), o.path.clone()) {
                Ok(d) if d == *o => {}
                Ok(_) => problems.push(format!("{} changed since the run", o.path.display())),
                Err(e) => problems.push(e.to_string()),
            }
        }
        problems
    }
}
