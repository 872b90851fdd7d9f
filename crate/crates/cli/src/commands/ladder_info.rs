use std::io;

use rayon::prelude::*;
use serde::Serialize;
use tempering_core::lumped::{find_lambda_min, reference_lambda_min, trace_threshold};
use tempering_core::models::{Ladder, LadderKind, Model, Restriction};
use tempering_core::Result;

use super::{error_cell, exit_code, generated, kind_name, write_table};
use crate::config::{FileConfig, Format, Plan};
use crate::output::{self, Table, SCHEMA_VERSION};

pub const COLUMNS: &[&str] = &[
    "n",
    "ladder_kind",
    "level",
    "exponent",
    "beta",
    "log_partition",
    "rgb_log_partition",
    "trace_threshold",
    "threshold_is_minimum",
    "t_min",
    "t_max",
    "error",
];

#[derive(Serialize)]
struct ClassProb {
    #[serde(skip_serializing_if = "Option::is_none")]
    counts: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<i64>,
    probability: f64,
}

#[derive(Serialize)]
struct LevelInfo {
    level: usize,
    exponent: f64,
    beta: f64,
    log_partition: f64,
    rgb_log_partition: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    distribution: Option<Vec<ClassProb>>,
}

#[derive(Serialize)]
struct Trace {
    thresholds: Vec<i64>,
    level_is_minimum: Vec<bool>,
}

#[derive(Serialize)]
struct Bottleneck {
    t_min: u32,
    t_max: u32,
    lambda_min: f64,
    lambda_max: f64,
    /// `λ_min` at the reference size, the large-`n` limit.
    reference_lambda_min: Option<f64>,
}

#[derive(Serialize)]
struct Entry {
    n: u32,
    ladder_kind: &'static str,
    levels: Vec<LevelInfo>,
    trace: Option<Trace>,
    trace_error: Option<String>,
    bottleneck: Option<Bottleneck>,
    bottleneck_error: Option<String>,
    error: Option<String>,
}

#[derive(Serialize)]
struct Report<'a> {
    schema: &'static str,
    schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated: Option<String>,
    config: &'a FileConfig,
    entries: Vec<Entry>,
}

fn levels(plan: &Plan, ladder: &Ladder) -> Result<Vec<LevelInfo>> {
    (0..ladder.levels())
        .map(|i| {
            let distribution = match (&ladder.model, plan.distributions) {
                (Model::Potts(_), true) => {
                    let (classes, probs) = ladder.class_distribution_restricted(i, plan.restriction)?;
                    Some(
                        classes
                            .iter()
                            .zip(probs)
                            .map(|(s, p)| ClassProb { counts: Some(s.counts().to_vec()), x: None, probability: p })
                            .collect(),
                    )
                }
                (Model::Exp(m), true) => Some(
                    m.points()
                        .zip(ladder.point_distribution(i)?)
                        .map(|(x, p)| ClassProb { counts: None, x: Some(x), probability: p })
                        .collect(),
                ),
                _ => None,
            };
            Ok(LevelInfo {
                level: i,
                exponent: ladder.exponents[i],
                beta: ladder.level_beta(i),
                log_partition: ladder.log_partition(i, Restriction::None)?,
                rgb_log_partition: ladder.rgb_log_partitions.as_ref().map(|v| v[i]),
                distribution,
            })
        })
        .collect()
}

fn entry(plan: &Plan, n: u32, kind: LadderKind) -> Entry {
    let mut e = Entry {
        n,
        ladder_kind: kind_name(kind),
        levels: Vec::new(),
        trace: None,
        trace_error: None,
        bottleneck: None,
        bottleneck_error: None,
        error: None,
    };
    let ladder = match plan.ladder_at(n, kind) {
        Ok(l) => l,
        Err(err) => {
            e.error = Some(error_cell(&err));
            return e;
        }
    };
    match levels(plan, &ladder) {
        Ok(v) => e.levels = v,
        Err(err) => e.error = Some(error_cell(&err)),
    }
    match trace_threshold(&ladder) {
        Ok(t) => e.trace = Some(Trace { thresholds: t.thresholds, level_is_minimum: t.level_is_minimum }),
        Err(err) => e.trace_error = Some(error_cell(&err)),
    }
    if let Model::Potts(pm) = &ladder.model {
        if pm.q == 3 {
            match find_lambda_min(pm) {
                Ok(lm) => {
                    e.bottleneck = Some(Bottleneck {
                        t_min: lm.t_min,
                        t_max: lm.t_max,
                        lambda_min: lm.lambda_min(n),
                        lambda_max: lm.t_max as f64 / n as f64,
                        reference_lambda_min: reference_lambda_min(pm.beta * n as f64).ok(),
                    })
                }
                Err(err) => e.bottleneck_error = Some(error_cell(&err)),
            }
        }
    }
    e
}

fn table(entries: &[Entry]) -> Table {
    let mut t = Table::new("ladder-info", COLUMNS);
    for e in entries {
        if let Some(err) = &e.error {
            let mut r = t.row();
            r.set("n", e.n).set("ladder_kind", e.ladder_kind).set("error", err.as_str());
            t.push(r);
            continue;
        }
        for l in &e.levels {
            let mut r = t.row();
            r.set("n", e.n)
                .set("ladder_kind", e.ladder_kind)
                .set("level", l.level)
                .set("exponent", l.exponent)
                .set("beta", l.beta)
                .set("log_partition", l.log_partition)
                .set("rgb_log_partition", l.rgb_log_partition);
            if let Some(tr) = &e.trace {
                r.set("trace_threshold", tr.thresholds[l.level])
                    .set("threshold_is_minimum", tr.level_is_minimum[l.level]);
            }
            if let Some(b) = &e.bottleneck {
                r.set("t_min", b.t_min).set("t_max", b.t_max);
            }
            t.push(r);
        }
    }
    t
}

pub fn run(plan: &Plan) -> io::Result<i32> {
    let grid: Vec<(u32, LadderKind)> = plan.ns.iter().flat_map(|&n| plan.kinds.iter().map(move |&k| (n, k))).collect();
    let entries: Vec<Entry> = grid.par_iter().map(|&(n, k)| entry(plan, n, k)).collect();
    let errors = entries.iter().filter(|e| e.error.is_some()).count();
    match plan.format {
        Format::Csv => write_table(plan, &table(&entries), plan.out.as_deref())?,
        Format::Json => {
            let report = Report {
                schema: "ladder-info",
                schema_version: SCHEMA_VERSION,
                generated: generated(plan),
                config: &plan.echo,
                entries,
            };
            output::emit(plan.out.as_deref(), &output::json_bytes(&report)?)?;
        }
    }
    Ok(exit_code(plan, errors, 0))
}
