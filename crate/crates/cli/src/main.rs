//! `hypersgg`: build procedural graphs and scene hypergraphs from relationship
//! annotations, forecast unseen frames and score the forecasts.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 internal invariant breach.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "{m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<hypersgg::Error> for CliError {
    fn from(e: hypersgg::Error) -> Self {
        match e {
            hypersgg::Error::Argument(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hypersgg", version, about = "Scene hypergraph pipeline for relationship anticipation")]
pub struct Cli {
    /// Print the JSON Schema of the annotation format and exit.
    #[arg(long)]
    schema: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check annotation files against the schema and structural invariants.
    Validate(ValidateArgs),
    /// Generate synthetic annotations from a known transition kernel.
    GenSynth(GenSynthArgs),
    /// Estimate the procedural graph from annotations.
    BuildPg(BuildPgArgs),
    /// Build the unified hypergraph and grow it with random-walk hyperedges.
    BuildHg(BuildHgArgs),
    /// Forecast relationships in the unseen part of each video.
    Anticipate(AnticipateArgs),
    /// Score predictions with Recall@K, mean Recall@K and NLL.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Annotation files.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Generator config as JSON (fields of the synthetic config).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_videos: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub entities: Option<usize>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// Probability that a pair keeps its predicate between frames.
    #[arg(long)]
    pub p_stay: Option<f64>,
    /// Mass of the dominant successor in the default cyclic kernel.
    #[arg(long)]
    pub dominant: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BuildPgArgs {
    /// Annotation files; all must share one vocabulary.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Additive smoothing applied to transition counts.
    #[arg(long)]
    pub smoothing_alpha: Option<f64>,
    /// Fit only on the observed prefix of each video.
    #[arg(long)]
    pub fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BuildHgArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Procedural graph JSON written by build-pg.
    #[arg(long)]
    pub pg: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a Graphviz rendering.
    #[arg(long)]
    pub dot: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub num_walks: Option<usize>,
    #[arg(long)]
    pub walk_length: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Choose incident transition edges proportionally to their weight.
    #[arg(long)]
    pub weighted_walks: bool,
}

#[derive(Debug, Args)]
pub struct AnticipateArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub pg: PathBuf,
    /// Predictions as JSON Lines.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Observed fraction of each video, in (0, 1).
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Frames to forecast past the last observed one, or `end`.
    #[arg(long)]
    pub horizon: Option<String>,
    /// Keep the current predicate as a candidate with its residual mass.
    #[arg(long)]
    pub persistence: bool,
    #[arg(long)]
    pub top_k_candidates: Option<usize>,
    #[arg(long, value_enum)]
    pub compat: Option<CompatArg>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground-truth annotation files.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Report destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Comma-separated cutoffs, e.g. 10,20,50.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub constraint: Option<ConstraintArg>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Score only the unseen frames of this split.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// With --fraction, score only this many frames past the observed part.
    #[arg(long)]
    pub horizon: Option<String>,
    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskArg {
    Sgg,
    Sga,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintArg {
    With,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatArg {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompatArg {
    Uniform,
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationArg {
    Frame,
    Video,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.schema {
        print!("{}", hypersgg::ingest::ANNOTATION_SCHEMA);
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("usage error: a subcommand is required (see --help)");
        return ExitCode::from(1);
    };
    let result = match command {
        Command::Validate(a) => commands::validate(a),
        Command::GenSynth(a) => commands::gen_synth(a),
        Command::BuildPg(a) => commands::build_pg(a),
        Command::BuildHg(a) => commands::build_hg(a),
        Command::Anticipate(a) => commands::anticipate(a),
        Command::Evaluate(a) => commands::evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hypersgg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
