//! `tiedheads` command-line entry point.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 verification failure,
//! 3 training divergence. Every run that gets past argument parsing writes
//! `manifest.json` into its output directory.

mod commands;
mod manifest;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tiedheads::trainer::Task;
use tiedheads::HeadKind;

#[derive(Parser, Debug)]
#[command(name = "tiedheads", version, about = "Tied-embedding scoring heads: verification, training and probes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run an invariant suite across every head kind.
    Verify(VerifyArgs),
    /// Train the toy encoder-decoder on a synthetic task.
    Train(TrainArgs),
    /// Score a vector against an EMB1 matrix and print the top-k tokens.
    Score(ScoreArgs),
    /// Brute-force minimum-support simplex recovery of h from an EMB1 matrix.
    Recover(RecoverArgs),
    /// Histogram of column norms of an EMB1 matrix or model checkpoint.
    Histogram(HistogramArgs),
    /// Train several heads over several seeds and compare final accuracies.
    Compare(CompareArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output directory for artifacts and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "TIEDHEADS_SEED", default_value_t = 1)]
    pub seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Properties,
    Mc,
    Gradcheck,
    All,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Monte Carlo trials per head.
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadArg {
    Baseline,
    #[value(name = "l2norm-input")]
    L2normInput,
    #[value(name = "sqnorm-output")]
    SqnormOutput,
    Distance,
    Cosine,
}

impl From<HeadArg> for HeadKind {
    fn from(h: HeadArg) -> Self {
        match h {
            HeadArg::Baseline => HeadKind::Baseline,
            HeadArg::L2normInput => HeadKind::L2NormInput,
            HeadArg::SqnormOutput => HeadKind::SqNormOutput,
            HeadArg::Distance => HeadKind::Distance,
            HeadArg::Cosine => HeadKind::Cosine,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskArg {
    Copy,
    Reverse,
    Cipher,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Copy => Task::Copy,
            TaskArg::Reverse => Task::Reverse,
            TaskArg::Cipher => Task::Cipher,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "copy")]
    pub task: TaskArg,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 64)]
    pub ffn_dim: usize,
    #[arg(long, default_value_t = 50)]
    pub vocab: usize,
    #[arg(long, default_value_t = 8)]
    pub seq_len: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 200)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0.1)]
    pub label_smoothing: f64,
    #[arg(long, default_value_t = 250)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 4)]
    pub eval_batches: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "baseline")]
    pub head: HeadArg,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Comma-separated head names.
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["baseline", "sqnorm-output"])]
    pub heads: Vec<HeadArg>,
    /// Number of seeds, counting up from --seed.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct VectorArgs {
    /// Inline vector, comma- or space-separated.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "h_file")]
    pub h: Option<String>,
    /// File holding the vector.
    #[arg(long)]
    pub h_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[command(flatten)]
    pub vector: VectorArgs,
    #[arg(long, value_enum, default_value = "baseline")]
    pub head: HeadArg,
    #[arg(long, default_value_t = 5)]
    pub topk: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct RecoverArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[command(flatten)]
    pub vector: VectorArgs,
    #[arg(long, default_value_t = 3)]
    pub max_support: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct HistogramArgs {
    /// EMB1 matrix or model checkpoint.
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[command(flatten)]
    pub common: Common,
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
    ExitCode::from(commands::run(cli.command))
}
