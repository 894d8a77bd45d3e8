use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one run, written next to its outputs. `config` holds every
/// setting with defaults filled in, so the job can be re-run from it alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Value,
    pub rng_seed: Option<u64>,
    pub build: String,
    /// SHA-256 of every input file, keyed by absolute path.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Package version plus a digest of the running executable, so manifests
/// from different builds are told apart.
pub fn build_id() -> &'static str {
    static ID: OnceLock<String> = OnceLock::new();
    ID.get_or_init(|| {
        let exe = std::env::current_exe()
            .ok()
            .and_then(|p| std::fs::read(p).ok())
            .map(|b| hex(&Sha256::digest(&b)[..8]))
            .unwrap_or_else(|| "unknown".into());
        format!("{} {}+{exe}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
    })
}

pub fn digests(paths: &[PathBuf]) -> Result<BTreeMap<String, String>, CliError> {
    paths
        .iter()
        .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
        .collect()
}

/// Fails when an input recorded in `manifest` has changed since the run.
pub fn verify_inputs(manifest: &RunManifest) -> Result<(), CliError> {
    for (path, digest) in &manifest.inputs {
        let now = sha256_file(Path::new(path))?;
        if &now != digest {
            return Err(CliError::Data(format!("input {path} changed since the recorded run")));
        }
    }
    Ok(())
}
