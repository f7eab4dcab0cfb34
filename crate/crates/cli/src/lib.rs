//! `kgic` command-line front end: configuration, subcommands and exit codes.

pub mod commands;
pub mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use config::{RunConfig, StageTwoMethod};

/// Usage and configuration problems exit with 2, everything else with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<kgic_core::Error> for CliError {
    fn from(e: kgic_core::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(e) => write!(f, "usage error: {e:#}"),
            CliError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kgic", version, about = "Two-stage instance completion for knowledge graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every experiment subcommand. Flags override the
/// config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Triple file (head<TAB>relation<TAB>tail); repeatable.
    #[arg(long = "triples", global = true)]
    pub triples: Vec<PathBuf>,
    /// Metadata file (entity<TAB>types<TAB>description).
    #[arg(long, global = true)]
    pub metadata: Option<PathBuf>,
    /// Relation whose tails become leading entity types.
    #[arg(long, global = true)]
    pub type_relation: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Split ratios as TRAIN,VALID,TEST.
    #[arg(long, global = true)]
    pub ratios: Option<String>,
    /// Output directory for artifacts and reports.
    #[arg(long = "out", global = true)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads for scoring and evaluation.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Stage-one method: recoin, hybrid, linear or remote.
    #[arg(long, global = true)]
    pub method: Option<String>,
    /// Stage-two method: transe, rotate, generative-local-mock or generative-remote.
    #[arg(long, global = true)]
    pub link_method: Option<String>,
    /// Fixed stage-one threshold instead of validation tuning.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Backend transport (tcp:HOST:PORT or stdio:CMD ARGS).
    #[arg(long, global = true)]
    pub backend: Option<String>,
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// KGE training epochs.
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub mask_types: bool,
    #[arg(long, global = true)]
    pub mask_description: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and intern a dataset, write a snapshot and print statistics.
    Ingest(CommonOnly),
    /// Stratified split; prints part sizes and the split fingerprint.
    Split(CommonOnly),
    /// Train TransE or RotatE on the train part and save a checkpoint.
    TrainKge(CommonOnly),
    /// Filtered (or raw) tail ranking of the test part.
    EvalLp(EvalLpArgs),
    /// Fit stage one, tune its threshold and write test-head selections.
    PredictProps(CommonOnly),
    /// Micro P/R/F1 of stage one on the test part.
    EvalPp(CommonOnly),
    /// Stage one then stage two on the test heads; writes predictions.
    RunIc(CommonOnly),
    /// Score saved predictions against the test part.
    EvalIc(EvalIcArgs),
    /// Instance completion under every field-mask combination.
    Ablate(CommonOnly),
    /// Protocol mock server (for tests).
    #[command(hide = true)]
    MockServer(MockServerArgs),
}

#[derive(Debug, Args)]
pub struct CommonOnly {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvalLpArgs {
    #[command(flatten)]
    pub common: Common,
    /// Rank against all entities without filtering known tails.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Args)]
pub struct EvalIcArgs {
    #[command(flatten)]
    pub common: Common,
    /// Predictions file written by run-ic (default: OUT/ic-predictions.json).
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MockServerArgs {
    /// Serve one session on stdin/stdout.
    #[arg(long, conflicts_with = "tcp")]
    pub stdio: bool,
    /// Listen on ADDR (prints the bound address).
    #[arg(long)]
    pub tcp: Option<String>,
    /// Conformance fixtures (JSONL) answered verbatim.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Comma-separated vocabulary; must include `</s>`.
    #[arg(long, default_value = "a,b,</s>")]
    pub vocab: String,
    /// Comma-separated relation labels.
    #[arg(long, default_value = "")]
    pub relations: String,
    /// Never answer.
    #[arg(long)]
    pub silent: bool,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    commands::dispatch(cli.command)
}

pub fn main_entry() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
