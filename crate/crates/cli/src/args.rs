use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use symkfcv_core::kfold::Protocol;
use symkfcv_core::model::Preset;

/// Symbolic-regression workbench: data generation, training under the
/// 80/20 or k-fold protocol, evaluation and comparison reports.
///
/// Set SYMKFCV_THREADS to cap internal parallelism.
#[derive(Debug, Parser)]
#[command(name = "symkfcv", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a JSONL dataset of synthetic indices.
    Generate(GenerateArgs),
    /// Draw a seeded subset of a dataset.
    Subsample(SubsampleArgs),
    /// Train under the baseline or k-fold protocol.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset and write curve and report files.
    Evaluate(EvaluateArgs),
    /// Combine experiment summaries into learning-curve and report files.
    Report(ReportArgs),
    /// Relative improvement of one summary's validation loss over another's.
    Compare(CompareArgs),
    /// Write the published loss tables as summary files.
    Reference(ReferenceArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of indices.
    #[arg(long)]
    pub count: usize,
    /// Master seed.
    #[arg(long)]
    pub seed: u64,
    /// Output JSONL path.
    #[arg(long)]
    pub out: PathBuf,
    /// Maximum expression tree depth.
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Number of input variables.
    #[arg(long)]
    pub variables: Option<usize>,
    /// Fewest points per index.
    #[arg(long)]
    pub min_points: Option<usize>,
    /// Most points per index.
    #[arg(long)]
    pub max_points: Option<usize>,
    /// Lower bound of sampled x values.
    #[arg(long, allow_hyphen_values = true)]
    pub x_min: Option<f64>,
    /// Upper bound of sampled x values.
    #[arg(long, allow_hyphen_values = true)]
    pub x_max: Option<f64>,
    /// Lower bound of sampled constants.
    #[arg(long, allow_hyphen_values = true)]
    pub const_min: Option<f64>,
    /// Upper bound of sampled constants.
    #[arg(long, allow_hyphen_values = true)]
    pub const_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SubsampleArgs {
    /// Input JSONL dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Number of indices to keep.
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub protocol: Protocol,
    /// JSONL dataset.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "desk")]
    pub preset: Preset,
    /// Master seed; fold, split and initialisation seeds derive from it.
    #[arg(long)]
    pub seed: u64,
    /// Experiment output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with overrides: `k`, `train_fraction`, `retrain_all` and a
    /// `model` object of config fields. Flags win over file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of folds (k-fold only).
    #[arg(long)]
    pub k: Option<usize>,
    /// Training share of the split (baseline only).
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Train a final model on every index instead of reusing the best fold.
    #[arg(long)]
    pub retrain_all: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// JSONL dataset to score.
    #[arg(long)]
    pub data: PathBuf,
    /// Report output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Reject the checkpoint unless its config hash equals this value.
    #[arg(long)]
    pub expect_hash: Option<String>,
    /// Reject the checkpoint unless it was trained with this model config (JSON).
    #[arg(long)]
    pub expect_config: Option<PathBuf>,
    /// Experiment summaries whose learning curves join the report.
    #[arg(long = "summary")]
    pub summaries: Vec<PathBuf>,
    /// Random starts of the constant fit, besides the all-ones start.
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    /// Also write SVG plots.
    #[arg(long)]
    pub plots: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Experiment summary (repeatable).
    #[arg(long = "summary", required = true)]
    pub summaries: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub plots: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Summary of the reference run.
    #[arg(long)]
    pub old: PathBuf,
    /// Summary of the run being compared.
    #[arg(long)]
    pub new: PathBuf,
    /// Comparison JSON output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReferenceArgs {
    /// Directory for `baseline_summary.json` and `kfcv_summary.json`.
    #[arg(long)]
    pub out: PathBuf,
}
