//! `storage-fleet`: simulate, dimension and inspect storage fleets from a
//! TOML scenario file.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use storage_fleet::LossConvention;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, unreadable or invalid configuration and input data.
    #[error("configuration error: {0}")]
    Config(String),
    /// Failures after the inputs were accepted: infeasible searches, engine
    /// errors, unwritable outputs.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<storage_fleet::traces::TraceError> for CliError {
    fn from(e: storage_fleet::traces::TraceError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ConventionArg {
    Input,
    Split,
}

impl From<ConventionArg> for LossConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Input => LossConvention::Input,
            ConventionArg::Split => LossConvention::Split,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "storage-fleet",
    version,
    about = "Scheduling and dimensioning of energy-storage fleets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed of a synthetic trace.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel searches (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Convention for reported capacities and levels.
    #[arg(long, global = true, value_enum)]
    convention: Option<ConventionArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SizeMode {
    Single,
    Fleet,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured policy over the trace.
    Simulate,
    /// Dimension the long store alone or together with secondary stores.
    Size {
        #[arg(value_enum)]
        mode: SizeMode,
        /// Price the configured stores as given instead of searching.
        #[arg(long)]
        no_optimize: bool,
    },
    /// Minimal single-store capacity per efficiency and overcapacity.
    MinStoreCurve,
    /// Grid search for the value-function decay rates.
    Tune,
    /// Write the synthetic demand and generation series.
    Synth,
    /// Histogram and autocorrelation of the residual trace.
    Stats,
}

pub struct Context {
    pub out: PathBuf,
    pub convention: Option<LossConvention>,
}

fn run(cli: Cli) -> Result<String, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = config::ScenarioConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    let ctx = Context {
        out: cli.out,
        convention: cli.convention.map(Into::into),
    };
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, &ctx),
        Command::Size { mode, no_optimize } => commands::size(&cfg, &ctx, mode, no_optimize),
        Command::MinStoreCurve => commands::min_store_curve(&cfg, &ctx),
        Command::Tune => commands::tune(&cfg, &ctx),
        Command::Synth => commands::synth(&cfg, &ctx),
        Command::Stats => commands::stats(&cfg, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("storage-fleet: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
