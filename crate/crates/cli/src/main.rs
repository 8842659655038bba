//! `oblivious`: runs scenarios, batches, oracle checks and parameter sweeps.
//!
//! Exit codes: 0 when every assertion passed, 1 when one failed, 2 for
//! usage, IO, parse and validation errors.

mod commands;
mod source;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use oblivious_core::AgentKind;

/// Environment variable naming the default directory for trace files.
pub const OUTPUT_DIR_ENV: &str = "OBLIVIOUS_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "oblivious-out";

#[derive(Parser, Debug)]
#[command(name = "oblivious", version, about = "Simulate baseline and oblivious agents on alignment scenarios")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its trace.
    Run(RunArgs),
    /// Run several scenarios, agents and seeds in parallel.
    Batch(BatchArgs),
    /// Check both planners against the exact oracle on random worlds.
    Verify(VerifyArgs),
    /// Step a parameter and print the decision taken at each value.
    Sweep(SweepArgs),
    /// Run an ensemble scenario with intention exchange.
    Multiagent(MultiagentArgs),
    /// Write the bundled challenge scenarios as TOML files.
    Export(ExportArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct Overrides {
    /// `baseline` or `oblivious`.
    #[arg(long)]
    agent: Option<AgentKind>,
    /// Planning depth in actions.
    #[arg(long)]
    depth: Option<usize>,
    /// Knowledge penalty; also sets the agent's penalty estimate.
    #[arg(long)]
    lambda: Option<f64>,
    /// Most actions a run may take.
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Bundled scenario name or path to a TOML/JSON scenario file.
    #[arg(long)]
    scenario: String,
    #[command(flatten)]
    overrides: Overrides,
    /// Seed for the run's random draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Trace file; defaults to a file in the output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Directory for trace files.
    #[arg(long, env = OUTPUT_DIR_ENV, default_value = DEFAULT_OUTPUT_DIR)]
    output_dir: PathBuf,
}

#[derive(Args, Debug)]
struct BatchArgs {
    /// Scenarios to run (repeatable); all bundled scenarios by default.
    #[arg(long)]
    scenario: Vec<String>,
    /// Agent kinds to run (repeatable); both by default.
    #[arg(long)]
    agent: Vec<AgentKind>,
    /// Seeds to run (repeatable); each scenario's own seed by default.
    #[arg(long)]
    seed: Vec<u64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Directory for trace files.
    #[arg(long, env = OUTPUT_DIR_ENV, default_value = DEFAULT_OUTPUT_DIR)]
    output_dir: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    max_states: usize,
    #[arg(long, default_value_t = 4)]
    max_actions: usize,
    #[arg(long, default_value_t = 3)]
    max_depth: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SweepParam {
    Lambda,
    DeceptionP,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, value_enum)]
    param: SweepParam,
    #[arg(long)]
    from: f64,
    #[arg(long)]
    to: f64,
    #[arg(long)]
    step: f64,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct MultiagentArgs {
    /// Ensemble scenario; the bundled three-agent world by default.
    #[arg(long, default_value = "ensemble")]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Directory for trace files.
    #[arg(long, env = OUTPUT_DIR_ENV, default_value = DEFAULT_OUTPUT_DIR)]
    output_dir: PathBuf,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// Directory to write `<name>.toml` files into.
    #[arg(long)]
    dir: PathBuf,
}

/// What a command found, as opposed to an error that stopped it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        (false, 2) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).target(env_logger::Target::Stderr).init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose, cli.quiet);
    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Batch(a) => commands::batch(a),
        Command::Verify(a) => commands::verify(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Multiagent(a) => commands::multiagent(a),
        Command::Export(a) => commands::export(a),
    };
    match result {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
