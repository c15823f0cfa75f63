//! `tda`: command-line front end for benchmarks, targeting and data
//! simulation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tda_core::ate::{AteMethod, HeadPartition};
use tda_core::targeting::Penalty;

/// Failure classes mapped to distinct exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration (exit 2).
    Usage(String),
    /// Anything that fails after the configuration was accepted (exit 1).
    Runtime(anyhow::Error),
}

impl From<tda_core::TdaError> for CliError {
    fn from(e: tda_core::TdaError) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

#[derive(Parser, Debug)]
#[command(name = "tda", version, about = "Targeted deep architectures: debiased neural plug-in estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte-Carlo benchmark of ATE estimators on IHDP-style data.
    AteBench(AteBenchArgs),
    /// Monte-Carlo benchmark of marginal survival curve estimators.
    SurvivalBench(SurvivalBenchArgs),
    /// Target a trained model on a dataset and write the targeting report.
    Target(TargetArgs),
    /// Generate a dataset CSV.
    Simulate(SimulateArgs),
    /// Recompute summaries from stored replication records.
    Report(ReportArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum PenaltyArg {
    L1,
    L2,
}

impl From<PenaltyArg> for Penalty {
    fn from(p: PenaltyArg) -> Self {
        match p {
            PenaltyArg::L1 => Penalty::L1,
            PenaltyArg::L2 => Penalty::L2,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Ate,
    Survival,
}

fn parse_method(s: &str) -> Result<AteMethod, String> {
    s.parse().map_err(|e: tda_core::TdaError| e.to_string())
}

fn parse_partition(s: &str) -> Result<HeadPartition, String> {
    s.parse().map_err(|e: tda_core::TdaError| e.to_string())
}

/// Flags shared by every command that reads a configuration.
#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the file and the TDA_SEED variable).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "tda-out")]
    pub out: PathBuf,
}

/// Targeting hyperparameters.
#[derive(Args, Debug, Clone)]
pub struct TargetingArgs {
    /// Projection penalty weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Projection penalty kind.
    #[arg(long, value_enum)]
    pub penalty: Option<PenaltyArg>,
    /// Maximum number of targeting iterations.
    #[arg(long)]
    pub tmax: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AteBenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub targeting: TargetingArgs,
    /// Number of replications.
    #[arg(long)]
    pub replications: Option<usize>,
    /// Sample size of each simulated dataset.
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated estimators (plugin,treg,aipw,post_tmle,tda_last,tda_full,tda_direct).
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub methods: Option<Vec<AteMethod>>,
    /// Submodel for tda_full: last-layer, outcome-heads, blocks:<spec>, auto-plateau.
    #[arg(long, value_parser = parse_partition)]
    pub partition: Option<HeadPartition>,
    /// Worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
    /// CSV with mu0/mu1 columns reused by every replication instead of simulating.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SurvivalBenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub targeting: TargetingArgs,
    /// Number of replications.
    #[arg(long)]
    pub replications: Option<usize>,
    /// Sample size of each simulated dataset.
    #[arg(long)]
    pub n: Option<usize>,
    /// Worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TargetArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub targeting: TargetingArgs,
    /// Kind of model and dataset.
    #[arg(long, value_enum, default_value = "ate")]
    pub task: Task,
    /// Model checkpoint; a model is trained on the data when omitted.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Dataset CSV.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Targeted parameters: last-layer, outcome-heads, blocks:<spec>, auto-plateau
    /// (survival supports last-layer only).
    #[arg(long, value_parser = parse_partition)]
    pub partition: Option<HeadPartition>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Kind of dataset.
    #[arg(long, value_enum, default_value = "survival")]
    pub task: Task,
    /// Number of subjects.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory holding replications.jsonl; summaries are rewritten there.
    #[arg(long, value_name = "DIR", default_value = "tda-out")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::AteBench(a) => commands::ate_bench(a),
        Command::SurvivalBench(a) => commands::survival_bench(a),
        Command::Target(a) => commands::target(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("Run `tda --help` for usage.");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
