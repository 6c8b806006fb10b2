//! The shared `--config` file and flag/config/default resolution.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use hypersgg::anticipation::Horizon;

use crate::{AggregationArg, CliError, CompatArg, ConstraintArg, FormatArg, TaskArg};

pub const SEED_ENV: &str = "HYPERSGG_SEED";

/// Every key is optional; a flag given on the command line wins over the
/// file, and the file wins over built-in defaults.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub fraction: Option<f64>,
    pub horizon: Option<HorizonSetting>,
    pub persistence: Option<bool>,
    pub top_k_candidates: Option<usize>,
    pub compat: Option<CompatArg>,
    pub smoothing_alpha: Option<f64>,
    pub num_walks: Option<usize>,
    pub walk_length: Option<usize>,
    pub weighted_walks: Option<bool>,
    pub task: Option<TaskArg>,
    pub k: Option<Vec<usize>>,
    pub constraint: Option<ConstraintArg>,
    pub format: Option<FormatArg>,
    pub aggregation: Option<AggregationArg>,
}

/// `"end"` or a positive frame count.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HorizonSetting {
    Frames(usize),
    Word(String),
}

impl HorizonSetting {
    pub fn resolve(&self) -> Result<Horizon, CliError> {
        match self {
            HorizonSetting::Frames(n) => parse_horizon(&n.to_string()),
            HorizonSetting::Word(s) => parse_horizon(s),
        }
    }
}

pub fn parse_horizon(s: &str) -> Result<Horizon, CliError> {
    if s.eq_ignore_ascii_case("end") {
        return Ok(Horizon::ToEnd);
    }
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(Horizon::Frames(n)),
        _ => Err(CliError::Usage(format!("--horizon expects a positive frame count or `end`, got {s:?}"))),
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))
}

pub fn load_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = read_text(path)?;
    hypersgg::ingest::parse_json(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

/// Flag, then config file, then `HYPERSGG_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

/// Overlay the keys of a JSON object onto `base`'s serialized form.
pub fn overlay(base: &impl Serialize, patch: Value) -> Result<Value, CliError> {
    let mut merged = serde_json::to_value(base).map_err(|e| CliError::Internal(e.to_string()))?;
    match (merged.as_object_mut(), patch) {
        (Some(m), Value::Object(p)) => {
            m.extend(p);
            Ok(merged)
        }
        (_, Value::Null) => Ok(merged),
        _ => Err(CliError::Usage("config file must contain a JSON object".into())),
    }
}
