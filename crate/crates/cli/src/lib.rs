//! Command-line front end: dataset synthesis, training, transfer sweeps,
//! evaluation, permutation tests and gradient checks.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use posetl::arch::ArchError;
use posetl::dataio::DataError;
use posetl::metrics::MetricsError;
use posetl::nn::NnError;
use posetl::transfer::TransferError;
use thiserror::Error;

use commands::{SplitName, ToyKind};
use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numerical: {0}")]
    Numerical(String),
}

impl CliError {
    /// 1 for usage and configuration, 2 for data and I/O, 3 for numerical
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFiniteLoss { .. } | NnError::AllDiverged => CliError::Numerical(e.to_string()),
            NnError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ArchError> for CliError {
    fn from(e: ArchError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TransferError> for CliError {
    fn from(e: TransferError) -> Self {
        match e {
            TransferError::Nn(e) => e.into(),
            TransferError::Arch(e) => e.into(),
            TransferError::Plan(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "posetl", version, about = "Pose-based activity recognition and transfer to inertial sensors")]
pub struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for splits, initialization, training and permutations.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override a config value, e.g. `--set train.lr=1e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a toy clip dataset (CSV clips plus manifest) to the output directory.
    Toy {
        #[arg(long, value_enum, default_value = "source")]
        domain: ToyKind,
        #[arg(long)]
        clips_per_class: Option<usize>,
    },
    /// Build windows from a manifest and write shards plus normalization stats.
    Synth,
    /// Train from scratch and write a checkpoint.
    Train,
    /// Run the transfer grid from a source checkpoint.
    Transfer {
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Score one majority-voted prediction per clip.
        #[arg(long)]
        majority_vote: bool,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
    },
    /// Paired permutation test between two prediction files.
    Permtest {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = posetl::metrics::DEFAULT_PERMUTATIONS)]
        n_perm: usize,
    },
    /// Compare analytic and numerical gradients on a random batch.
    Gradcheck,
}

pub fn run(cli: &Cli) -> Result<String, CliError> {
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides, cli.seed, cli.out.as_deref())?;
    match &cli.command {
        Command::Toy { domain, clips_per_class } => commands::cmd_toy(&cfg, *domain, *clips_per_class),
        Command::Synth => commands::cmd_synth(&cfg),
        Command::Train => commands::cmd_train(&cfg),
        Command::Transfer { source } => commands::cmd_transfer(&cfg, source.as_deref()),
        Command::Eval { checkpoint, majority_vote, split } => {
            commands::cmd_eval(&cfg, checkpoint, *majority_vote, *split)
        }
        Command::Permtest { a, b, n_perm } => commands::cmd_permtest(&cfg, a, b, *n_perm),
        Command::Gradcheck => commands::cmd_gradcheck(&cfg),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
