//! Command-line driver: synthesize and preprocess data, split it, run the
//! classical baselines and toy models, score results and build reports.
//!
//! Every subcommand that writes a file refuses to overwrite it without
//! `--force` and drops a `<output>.manifest.json` next to it.

mod commands;
mod manifest;
pub mod reproduce;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

pub use manifest::{manifest_path, Manifest};
pub use reproduce::{reproduce_scores, ReproReport, ReproduceError, RowCheck};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// Malformed input data; exits like a usage error.
    #[error("{stage}: {message}")]
    Input { stage: &'static str, message: String },
    #[error("{stage}: {message}")]
    Runtime { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input { .. } => 2,
            CliError::Runtime { .. } => 1,
        }
    }

    pub(crate) fn input(stage: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Input {
            stage,
            message: e.to_string(),
        }
    }

    pub(crate) fn runtime(stage: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Runtime {
            stage,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ppgbench", version, about = "PPG benchmark toolkit")]
pub struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, env = "BENCH_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render synthetic PPG segments to JSONL.
    Synth(SynthArgs),
    /// Resample, window and normalize segments.
    Preprocess(PreprocessArgs),
    /// Write a participant-level split plan.
    Split(SplitArgs),
    /// Run a classical baseline.
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Train a toy transformer and write a checkpoint.
    Train(TrainArgs),
    /// Score a predictions CSV.
    Evaluate(EvaluateArgs),
    /// Build the dimension report and radar coordinates from results.
    Report(ReportArgs),
    /// Recompute published win scores from transcribed fixtures.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 72.0)]
    pub hr: f64,
    #[arg(long, default_value_t = 15.0)]
    pub rr: f64,
    /// Seconds per segment.
    #[arg(long, default_value_t = 30.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 40.0)]
    pub fs: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.2)]
    pub wander: f64,
    /// Number of segments; segment i uses seed + i.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value = "synth")]
    pub subject: String,
    /// Label to attach.
    #[arg(long, value_enum, default_value_t = SynthLabel::Hr)]
    pub label: SynthLabel,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthLabel {
    Hr,
    Rr,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Target sampling rate.
    #[arg(long, default_value_t = 40.0)]
    pub fs: f64,
    /// Window length in seconds; shorter inputs are repeat-padded.
    #[arg(long, default_value_t = 30.0)]
    pub window: f64,
    /// Zero-based channel to keep.
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    /// Skip min-max normalization.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolArg {
    Loo,
    Ratio,
    Record,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ProtocolArg::Ratio)]
    pub protocol: ProtocolArg,
    /// train,val,test ratios for ratio and record splits.
    #[arg(long, default_value = "0.6,0.2,0.2")]
    pub ratios: String,
    /// Validation share of the non-test records under leave-one-out.
    #[arg(long, default_value_t = 0.2)]
    pub val_ratio: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum BaselineCommand {
    /// Heart rate from inter-beat intervals.
    Hr(SegmentBaselineArgs),
    /// Respiration rate from baseline wander.
    Rr(SegmentBaselineArgs),
    /// Per-segment morphology feature vectors.
    Morph(SegmentBaselineArgs),
    /// Ridge regression on morphology features.
    Ridge(RidgeArgs),
    /// Last observation carried forward on lab histories.
    Locf(LocfArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SegmentBaselineArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RidgeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Split plan written by `split`.
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    #[arg(long, default_value_t = ppgbench_core::baselines::DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LocfArgs {
    /// Lab events CSV.
    #[arg(long)]
    pub labs: PathBuf,
    #[arg(long)]
    pub analyte: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Causal,
    Bidirectional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveArg {
    NextPatchMse,
    NextPatchLaplace,
    MaskedMse,
    /// Supervised loss on the task head using segment labels.
    Task,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeArg {
    Head,
    Full,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Causal)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::NextPatchMse)]
    pub objective: ObjectiveArg,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FreezeArg::Full)]
    pub freeze: FreezeArg,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    #[arg(long, default_value_t = 32)]
    pub d_model: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 64)]
    pub mlp_hidden: usize,
    #[arg(long, default_value_t = 0.3)]
    pub mask_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    /// Per-step loss trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    /// CSV with `label` and `prediction` columns.
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long, value_enum, default_value_t = TaskKind::Regression)]
    pub kind: TaskKind,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Results CSV (`task_id,dataset_id,model_id,model_size,...`).
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write markdown tables here.
    #[arg(long)]
    pub markdown: Option<PathBuf>,
    /// Judge win-score ties after rounding to this many decimals.
    #[arg(long)]
    pub tie_decimals: Option<u32>,
    /// Reference family for the domain/size regime summary.
    #[arg(long, requires = "regime_candidate")]
    pub regime_reference: Option<String>,
    #[arg(long, requires = "regime_reference")]
    pub regime_candidate: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReproduceArgs {
    /// Fixture directory; defaults to the bundled transcriptions.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Write the row-by-row comparison as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit 1 when any row mismatches.
    #[arg(long)]
    pub strict: bool,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
