//! Command-line entry point: train, evaluate, recommend, verification
//! oracles, and embedding export.

mod commands;
mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    /// An oracle or gradient check ran but exceeded its tolerance.
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }
}

pub(crate) fn runtime<E: std::fmt::Display>(stage: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{stage}: {e}"))
}

#[derive(Parser)]
#[command(
    name = "metricfm",
    version,
    about = "Factorization machines with learned distance metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and evaluate it on the task's test split.
    Train(TrainArgs),
    /// Re-evaluate a saved model under its stored protocol.
    Evaluate(EvaluateArgs),
    /// Rank items for one user with a saved model.
    Recommend(RecommendArgs),
    /// Fast-path vs naive-oracle equivalence over a (k, m) grid.
    OracleCheck(OracleArgs),
    /// Finite-difference validation of recorded gradients per kind.
    Gradcheck(GradcheckArgs),
    /// Export one field's embedding rows as delimiter-separated text.
    ExportEmbeddings(ExportArgs),
    /// Generate the seeded synthetic implicit-feedback dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    /// Flat key=value config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// rating | topn
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// tabular | libfm
    #[arg(long)]
    format: Option<String>,
    /// inner | euclidean | mahalanobis | dnn | manhattan | chebyshev | cosine
    #[arg(long)]
    distance: Option<String>,
    #[arg(long)]
    use_weight: Option<bool>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    /// sgd | adam
    #[arg(long)]
    optimizer: Option<String>,
    /// Negatives sampled per positive.
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Model binary written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Dataset override; defaults to the path stored in the model metadata.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Task override; defaults to the stored task.
    #[arg(long)]
    task: Option<String>,
    /// Metrics output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct RecommendArgs {
    #[arg(long)]
    model: PathBuf,
    /// User identifier as it appears in the training data.
    #[arg(long)]
    user: String,
    /// Comma-separated item identifiers, or `all` for the whole vocabulary.
    #[arg(long, default_value = "all")]
    items: String,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
}

#[derive(Args)]
pub struct OracleArgs {
    /// Comma-separated embedding sizes.
    #[arg(long, default_value = "4,8,16")]
    k_list: String,
    /// Comma-separated active-set sizes.
    #[arg(long, default_value = "2,3,4,5,6,7,8")]
    m_list: String,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 20200517)]
    seed: u64,
}

#[derive(Args)]
pub struct GradcheckArgs {
    /// Comma-separated kinds, or `all`.
    #[arg(long, default_value = "all")]
    kinds: String,
    #[arg(long, default_value_t = 20200517)]
    seed: u64,
}

#[derive(Args)]
pub struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    /// Field name, e.g. `item`.
    #[arg(long)]
    field: String,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    users: usize,
    #[arg(long, default_value_t = 500)]
    items: usize,
    #[arg(long, default_value_t = 12)]
    per_user: usize,
    #[arg(long, default_value_t = 20200517)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::train::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Recommend(args) => commands::recommend::run(args),
        Command::OracleCheck(args) => commands::oracle::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
        Command::ExportEmbeddings(args) => commands::export::run(args),
        Command::Synth(args) => commands::synth::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
