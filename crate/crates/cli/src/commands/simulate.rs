use std::io;
use std::path::PathBuf;

use serde::Serialize;
use tempering_core::mc::{mc_init_with, mc_run, McKind, RunStats};
use tempering_core::models::Ladder;
use tempering_core::Result;

use super::{error_cell, generated, kind_name, write_table};
use crate::config::{FileConfig, Format, Plan, SimKind};
use crate::exit;
use crate::output::{self, Table, SCHEMA_VERSION};

pub const HISTOGRAM_COLUMNS: &[&str] = &["level", "counts", "count", "frequency", "probability"];

#[derive(Serialize)]
struct LevelSummary {
    level: usize,
    samples: u64,
    /// Total variation between the histogram and the exact class law.
    tv_to_exact: Option<f64>,
}

#[derive(Serialize)]
struct Report<'a> {
    schema: &'static str,
    schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated: Option<String>,
    config: &'a FileConfig,
    n: u32,
    ladder_kind: &'static str,
    stats: Option<RunStats>,
    levels: Vec<LevelSummary>,
    error: Option<String>,
}

fn mc_kind(plan: &Plan, ladder: &Ladder) -> McKind {
    match plan.sim_kind {
        SimKind::Metropolis => McKind::Metropolis { level: plan.sim_level.unwrap_or(ladder.top()) },
        SimKind::Tempering => McKind::Tempering,
        SimKind::Swap => McKind::Swap,
    }
}

fn simulate(plan: &Plan, n: u32) -> Result<(Ladder, RunStats)> {
    let ladder = plan.ladder_at(n, plan.kinds[0])?;
    let mut state = mc_init_with(&ladder, mc_kind(plan, &ladder), plan.seed, plan.start(), plan.restriction)?;
    let stats = mc_run(&mut state, &ladder, plan.steps, plan.burn_in, plan.stride)?;
    Ok((ladder, stats))
}

fn histogram_table(plan: &Plan, ladder: &Ladder, stats: &RunStats) -> Result<(Table, Vec<LevelSummary>)> {
    let mut table = Table::new("simulate-histogram", HISTOGRAM_COLUMNS);
    let mut levels = Vec::new();
    for (level, hist) in stats.class_histograms.iter().enumerate() {
        let (classes, probs) = ladder.class_distribution_restricted(level, plan.restriction)?;
        let total = hist.total();
        for (sigma, &count) in &hist.0 {
            let p = classes.iter().position(|c| c == sigma).map(|k| probs[k]);
            let counts: Vec<String> = sigma.counts().iter().map(|c| c.to_string()).collect();
            let mut r = table.row();
            r.set("level", level)
                .set("counts", counts.join(" "))
                .set("count", count)
                .set("frequency", count as f64 / total.max(1) as f64)
                .set("probability", p);
            table.push(r);
        }
        levels.push(LevelSummary {
            level,
            samples: total,
            tv_to_exact: (total > 0).then(|| hist.tv_to(&classes, &probs)),
        });
    }
    Ok((table, levels))
}

/// Histogram path: the configured one, else next to a JSON report.
fn histogram_path(plan: &Plan) -> Option<PathBuf> {
    plan.histogram.clone().or_else(|| plan.out.as_ref().map(|p| p.with_extension("histogram.csv")))
}

pub fn run(plan: &Plan) -> io::Result<i32> {
    let n = plan.ns[0];
    let mut report = Report {
        schema: "simulate",
        schema_version: SCHEMA_VERSION,
        generated: generated(plan),
        config: &plan.echo,
        n,
        ladder_kind: kind_name(plan.kinds[0]),
        stats: None,
        levels: Vec::new(),
        error: None,
    };
    let outcome = simulate(plan, n).and_then(|(ladder, stats)| {
        let (table, levels) = histogram_table(plan, &ladder, &stats)?;
        Ok((stats, table, levels))
    });
    let code = match outcome {
        Ok((stats, table, levels)) => {
            report.stats = Some(stats);
            report.levels = levels;
            match plan.format {
                Format::Csv => write_table(plan, &table, plan.out.as_deref())?,
                Format::Json => {
                    let hist = histogram_path(plan);
                    if let Some(p) = &hist {
                        output::emit(Some(p), &table.to_csv(report.generated.as_deref())?)?;
                    }
                    output::emit(plan.out.as_deref(), &output::json_bytes(&report)?)?;
                }
            }
            exit::OK
        }
        Err(e) => {
            report.error = Some(error_cell(&e));
            output::emit(plan.out.as_deref(), &output::json_bytes(&report)?)?;
            exit::INCOMPLETE
        }
    };
    Ok(code)
}
