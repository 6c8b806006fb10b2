//! Atomic file output and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Write `contents` to a sibling temp file, then rename it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("output path {} has no file name", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let io = |e: std::io::Error| CliError::Data(format!("writing {}: {e}", path.display()));
    {
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(contents).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

/// Provenance record stored next to every output as `<output>.manifest.json`.
///
/// Timestamps live only here so the outputs themselves stay byte-stable.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub tool_version: &'static str,
    pub rng_algorithm: &'static str,
    pub started_unix_ms: u128,
    pub wall_time_ms: u128,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub extra: Value,
}

pub struct ManifestBuilder {
    command: String,
    started: Instant,
    started_unix_ms: u128,
}

impl ManifestBuilder {
    pub fn start(command: &str) -> Self {
        let started_unix_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        Self { command: command.to_string(), started: Instant::now(), started_unix_ms }
    }

    pub fn finish(
        self,
        config: &impl Serialize,
        seeds: Vec<u64>,
        inputs: &[&Path],
        outputs: &[&Path],
        extra: Value,
    ) -> RunManifest {
        RunManifest {
            command: self.command,
            argv: std::env::args().collect(),
            config: serde_json::to_value(config).unwrap_or(Value::Null),
            seeds,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            tool_version: env!("CARGO_PKG_VERSION"),
            rng_algorithm: hypersgg::rng::RNG_ALGORITHM,
            started_unix_ms: self.started_unix_ms,
            wall_time_ms: self.started.elapsed().as_millis(),
            extra,
        }
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

pub fn write_manifest(output: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(&manifest_path(output), format!("{text}\n").as_bytes())
}
