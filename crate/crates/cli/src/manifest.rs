//! Per-run manifest and output placement.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const RUN_MANIFEST: &str = "run.json";

/// Everything needed to repeat a run: arguments, resolved options, input
/// digests and component versions. No timestamps, so repeated runs produce
/// identical manifests.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub cli_version: String,
    pub core_version: String,
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub resolved: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rig: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, resolved: impl Serialize) -> Self {
        Self {
            tool: "emo3d".into(),
            cli_version: env!("CARGO_PKG_VERSION").into(),
            core_version: emo3d::VERSION.into(),
            command: command.into(),
            args: std::env::args().skip(1).collect(),
            seed,
            resolved: serde_json::to_value(resolved).expect("options serialize"),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            backend: None,
            rig: None,
        }
    }

    /// Records the SHA-256 of an input file.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.insert(path.display().to_string(), hex(&Sha256::digest(&bytes)));
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Where a single-file command writes its result and its manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub file: PathBuf,
    pub manifest: PathBuf,
}

/// `--out` names a file when it has an extension (`report.csv` puts the
/// manifest in `report.run.json` beside it) and a directory otherwise
/// (`<dir>/<default_name>` plus `<dir>/run.json`).
pub fn resolve_target(out: &Path, default_name: &str) -> Result<Target, CliError> {
    let is_file = out.extension().is_some() && !out.is_dir();
    let target = if is_file {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
        Target { file: out.to_path_buf(), manifest: out.with_file_name(format!("{stem}.{RUN_MANIFEST}")) }
    } else {
        Target { file: out.join(default_name), manifest: out.join(RUN_MANIFEST) }
    };
    if let Some(parent) = target.file.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    Ok(target)
}

/// Writes through a temporary file and a rename, so readers never see half a file.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp-write");
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}
