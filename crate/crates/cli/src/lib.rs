//! Experiment runner for the tempering toolkit.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use config::{Command, ConfigErrors, FileConfig, Format, Issue, Overrides};

/// Process exit codes.
pub mod exit {
    /// Every requested item completed (and, under `--strict`, passed).
    pub const OK: i32 = 0;
    /// Some grid point or item errored, or failed under `--strict`.
    pub const INCOMPLETE: i32 = 1;
    /// The configuration was rejected before any computation.
    pub const CONFIG: i32 = 2;
    /// Output could not be written.
    pub const IO: i32 = 3;
}

#[derive(Debug, Parser)]
#[command(name = "tempering", version, about = "Exact analysis and simulation of tempering chains")]
pub struct Cli {
    /// TOML experiment file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Nonzero exit when a verification item fails.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Drop the generation timestamp and wall-clock columns.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Sub {
    /// Discrete lemma suite on the 3-state Potts model.
    Verify,
    /// Spectral gaps over a size grid, with decay fits.
    ScanGap,
    /// Conductance of a cut family over a size grid.
    ScanConductance,
    /// Metropolis versus tempering on the sorted sector.
    CompareRgb,
    /// Monte Carlo run with class histograms.
    Simulate,
    /// Per-level partition functions and mode diagnostics.
    LadderInfo,
}

impl Sub {
    fn command(self) -> Command {
        match self {
            Sub::Verify => Command::Verify,
            Sub::ScanGap => Command::ScanGap,
            Sub::ScanConductance => Command::ScanConductance,
            Sub::CompareRgb => Command::CompareRgb,
            Sub::Simulate => Command::Simulate,
            Sub::LadderInfo => Command::LadderInfo,
        }
    }
}

fn report_config_errors(errors: &ConfigErrors) {
    let doc = serde_json::json!({
        "schema": "tempering.error",
        "schema_version": output::SCHEMA_VERSION,
        "errors": errors.0,
    });
    let bytes = output::json_bytes(&doc).unwrap_or_default();
    eprint!("{}", String::from_utf8_lossy(&bytes));
}

/// Runs a parsed command line and returns the exit code.
pub fn run(cli: Cli) -> i32 {
    let command = cli.command.command();
    let flags = Overrides {
        out: cli.out,
        format: cli.format.map(|f| match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }),
        seed: cli.seed,
        threads: cli.threads,
        no_timestamp: cli.no_timestamp,
        strict: cli.strict,
    };
    let file = match &cli.config {
        Some(p) => config::read_file(p),
        None => Ok(FileConfig::default()),
    };
    let plan = file.and_then(|f| config::resolve(command, f, &flags));
    let plan = match plan {
        Ok(p) => p,
        Err(e) => {
            report_config_errors(&e);
            return exit::CONFIG;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(plan.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            report_config_errors(&ConfigErrors(vec![Issue { field: "threads".into(), message: e.to_string() }]));
            return exit::CONFIG;
        }
    };
    match pool.install(|| commands::dispatch(&plan)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit::IO
        }
    }
}
