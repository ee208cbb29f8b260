use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod sweep;

#[derive(Parser, Debug)]
#[command(name = "gcs", version, about = "Gaussian cluster-state simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a protocol or a graph file and export the trace.
    Build(BuildArgs),
    /// Compare the reference appendix matrices with the computed pipeline.
    VerifyAppendix(VerifyArgs),
    /// Scan a (kappa, squeezing) grid.
    Sweep(SweepArgs),
    /// Pass a squeezed mode through a chain of bricks.
    Chain(ChainArgs),
    /// PPT entanglement report of a state file or a protocol output.
    EntangleReport(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    TwoMode,
    Square,
    #[value(name = "composite-41")]
    Composite41,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ChainModeArg {
    Fresh,
    Loop,
}

#[derive(Args, Debug, Clone)]
pub struct Source {
    #[arg(long, value_enum, conflicts_with = "graph")]
    pub protocol: Option<Protocol>,
    /// JSON graph description compiled with the general builder.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub squeezing: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct Output {
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, allow_negative_numbers = true)]
    pub kappa_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub kappa_max: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub kappa_step: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub r_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub r_max: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub r_step: Option<f64>,
    /// Bricks used to fit the chain noise slope; 0 skips the chain column.
    #[arg(long, default_value_t = 3)]
    pub chain_length: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct ChainArgs {
    #[arg(long, default_value_t = 4)]
    pub length: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub kappa: f64,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    pub squeezing: f64,
    /// Squeezing of the p-squeezed input mode.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub input_squeezing: f64,
    #[arg(long, value_enum, default_value_t = ChainModeArg::Fresh)]
    pub mode: ChainModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// State JSON file; when absent the state comes from `--protocol` or `--graph`.
    #[arg(long, conflicts_with_all = ["protocol", "graph"])]
    pub state: Option<PathBuf>,
    #[command(flatten)]
    pub source: Source,
    /// Modes on one side of the cut, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub party: Vec<usize>,
    #[command(flatten)]
    pub output: Output,
}

/// Failure carried to the exit code: 2 for user errors, 3 for internal ones.
#[derive(Debug)]
pub enum Failure {
    User(String),
    Internal(String),
}

impl From<gcs_core::Error> for Failure {
    fn from(e: gcs_core::Error) -> Self {
        match e {
            gcs_core::Error::Invariant(_) | gcs_core::Error::Numerical(_) => Failure::Internal(e.to_string()),
            gcs_core::Error::InvalidArgument(_) | gcs_core::Error::Parse(_) => Failure::User(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GCS_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(a) => commands::build(&a),
        Command::VerifyAppendix(a) => commands::verify_appendix(&a),
        Command::Sweep(a) => sweep::run(&a),
        Command::Chain(a) => commands::chain(&a),
        Command::EntangleReport(a) => commands::entangle_report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
    }
}
