//! Subcommand implementations. Each builds one table (or JSON document)
//! in grid order and returns the process exit code.

mod compare;
mod ladder_info;
mod scan;
mod simulate;
mod verify;

use std::io;
use std::path::Path;
use std::time::Instant;

use tempering_core::analysis::SpectralOptions;
use tempering_core::lumped::{
    build_exp_level_chain, build_exp_swap_chain, build_flattened_level_chain, build_level_chain, build_swap_chain_with,
    build_tempering_chain, build_trace_projection, trace_threshold, LumpedChain, SwapOptions,
};
use tempering_core::models::{Ladder, LadderKind, Model};
use tempering_core::{Error, Result};

use crate::config::{ChainKind, Command, Plan};
use crate::exit;
use crate::output::{self, Table};

pub fn dispatch(plan: &Plan) -> io::Result<i32> {
    match plan.command {
        Command::Verify => verify::run(plan),
        Command::ScanGap => scan::gap(plan),
        Command::ScanConductance => scan::conductance(plan),
        Command::CompareRgb => compare::run(plan),
        Command::Simulate => simulate::run(plan),
        Command::LadderInfo => ladder_info::run(plan),
    }
}

/// Stable short code for each core error.
pub fn error_code(e: &Error) -> &'static str {
    match e {
        Error::InvalidParameter(_) => "invalid_parameter",
        Error::StateCap { .. } => "state_cap",
        Error::Unsupported(_) => "unsupported",
        Error::LevelOutOfRange { .. } => "level_out_of_range",
        Error::PointOutOfRange { .. } => "point_out_of_range",
        Error::Divisibility { .. } => "divisibility",
        Error::NoTrace => "no_trace",
        Error::Window(_) => "window",
        Error::InconsistentChain(_) => "inconsistent_chain",
        Error::NoConvergence { .. } => "no_convergence",
        Error::InvalidCut(_) => "invalid_cut",
        Error::Degenerate(_) => "degenerate",
    }
}

/// `code: message`, as written to error columns.
pub fn error_cell(e: &Error) -> String {
    format!("{}: {e}", error_code(e))
}

pub fn kind_name(kind: LadderKind) -> &'static str {
    match kind {
        LadderKind::Tempered => "tempered",
        LadderKind::Dampened => "dampened",
    }
}

pub fn restriction_name(plan: &Plan) -> &'static str {
    match plan.restriction {
        tempering_core::models::Restriction::None => "none",
        tempering_core::models::Restriction::Rgb => "rgb",
    }
}

pub fn family_name(plan: &Plan) -> &'static str {
    match plan.family {
        crate::config::Family::Potts => "potts",
        crate::config::Family::Ising => "ising",
        crate::config::Family::Exp => "exp",
    }
}

pub fn spectral_options(plan: &Plan) -> SpectralOptions {
    SpectralOptions { method: plan.method, tol: plan.tolerance, seed: plan.seed, ..SpectralOptions::default() }
}

/// Builds the configured chain on `ladder`.
pub fn build_chain(plan: &Plan, ladder: &Ladder, chain: ChainKind) -> Result<LumpedChain> {
    let r = plan.restriction;
    let built = match (chain, &ladder.model) {
        (ChainKind::Level, Model::Potts(_)) => build_level_chain(ladder, plan.level.unwrap_or(ladder.top()), r)?,
        (ChainKind::Level, Model::Exp(m)) => {
            let level = plan.level.unwrap_or(ladder.top());
            ladder.check_level(level)?;
            build_exp_level_chain(m, ladder.exponents[level])?
        }
        (ChainKind::Tempering, _) => build_tempering_chain(ladder, r)?,
        (ChainKind::Swap, Model::Potts(_)) => {
            build_swap_chain_with(ladder, r, SwapOptions { swaps: true, state_cap: plan.state_cap })?
        }
        (ChainKind::Swap, Model::Exp(_)) => build_exp_swap_chain(ladder)?,
        (ChainKind::Trace, _) => build_trace_projection(ladder, &trace_threshold(ladder)?)?,
        (ChainKind::Flattened, Model::Potts(pm)) => build_flattened_level_chain(pm)?,
        (ChainKind::Flattened, Model::Exp(_)) => {
            return Err(Error::Unsupported("flattened chains need the 3-state Potts model".into()))
        }
    };
    if built.len() > plan.state_cap {
        return Err(Error::StateCap {
            count: built.len() as f64,
            cap: plan.state_cap,
            hint: "raise analysis.state_cap or pick a projected chain",
        });
    }
    Ok(built)
}

/// Writes `chain` as a triplet dump when a dump directory is configured.
pub fn dump(plan: &Plan, name: &str, chain: &LumpedChain) -> io::Result<()> {
    let Some(dir) = &plan.dump_dir else { return Ok(()) };
    std::fs::create_dir_all(dir)?;
    let mut f = io::BufWriter::new(std::fs::File::create(dir.join(format!("{name}.tsv")))?);
    chain.write_triplets(&mut f)?;
    io::Write::flush(&mut f)
}

/// RFC 3339 generation time, or none under `--no-timestamp`.
pub fn generated(plan: &Plan) -> Option<String> {
    plan.timestamp.then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

/// Wall-clock seconds since `start`, blank under `--no-timestamp`.
pub fn seconds(plan: &Plan, start: Instant) -> Option<f64> {
    plan.timestamp.then(|| start.elapsed().as_secs_f64())
}

pub fn write_table(plan: &Plan, table: &Table, path: Option<&Path>) -> io::Result<()> {
    let bytes = table.render(plan.format, generated(plan).as_deref(), &plan.echo)?;
    output::emit(path, &bytes)
}

/// Exit code after a run: errors always count; failed items only count
/// under `--strict`.
pub fn exit_code(plan: &Plan, errors: usize, failures: usize) -> i32 {
    if errors > 0 || (plan.strict && failures > 0) {
        exit::INCOMPLETE
    } else {
        exit::OK
    }
}
