use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use was_core::attention::ScaleDim;

#[derive(Debug, Parser)]
#[command(name = "was", version, about = "Weak-attention suppression: train, analyse and verify toy encoders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a seeded synthetic corpus; writes a checkpoint and loss.csv.
    DemoTrain(TrainArgs),
    /// Suppression profiles and layer fractions of a checkpoint.
    Analyze(AnalyzeArgs),
    /// Accuracy and suppression fractions across gamma values.
    SweepGamma(SweepArgs),
    /// Finite-difference gradient checks on small models.
    Gradcheck(GradcheckArgs),
    /// Property checks of suppression and statistics against reference routes.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run configuration (encoder, training, corpus).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for the corpus and for training.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, default_value = "was-out")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ScaleDimArg {
    Model,
    Head,
}

impl From<ScaleDimArg> for ScaleDim {
    fn from(s: ScaleDimArg) -> Self {
        match s {
            ScaleDimArg::Model => ScaleDim::Model,
            ScaleDimArg::Head => ScaleDim::Head,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Enables suppression with this gamma.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub updates: Option<usize>,
    /// Dimension in the attention scale `1/sqrt(d)`.
    #[arg(long, value_enum)]
    pub scale_dim: Option<ScaleDimArg>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated 1-based layers; empty for none. Defaults to the first
    /// and last layer.
    #[arg(long)]
    pub layers: Option<String>,
    /// Comma-separated 0-based query positions for offset profiles.
    #[arg(long, default_value = "10,20,30")]
    pub positions: String,
    /// Replaces the checkpoint's gamma.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Feature files (WASF or CSV) analysed instead of the synthetic corpus.
    #[arg(long)]
    pub features: Vec<PathBuf>,
    /// Directory of golden CSV files to compare against.
    #[arg(long)]
    pub golden: Option<PathBuf>,
    /// Rewrites the golden files from the reference loop statistics.
    #[arg(long, requires = "golden")]
    pub bless: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated gamma values.
    #[arg(long)]
    pub gamma: String,
    /// Evaluate this checkpoint at every gamma instead of training.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub updates: Option<usize>,
    #[arg(long, value_enum)]
    pub scale_dim: Option<ScaleDimArg>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Adds a deliberate error to one analytic gradient.
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Generated cases per property.
    #[arg(long, default_value_t = 10_000)]
    pub rows: usize,
    /// Swaps the strict threshold comparison for a non-strict one.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}
