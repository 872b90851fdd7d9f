use std::io;
use std::time::Instant;

use rayon::prelude::*;
use tempering_core::analysis::{
    conductance as cut_conductance, conductance_mixing_bounds, fit_decay, log_conductance_lower_bound,
    min_threshold_conductance, no_majority_from_ladder, spectral_gap_with, tv_mixing_time, FitKind, SpectralMethod,
};
use tempering_core::lumped::{bottleneck_index, CutSet};
use tempering_core::models::{LadderKind, Model};
use tempering_core::{Error, Result};

use super::{
    build_chain, dump, error_cell, exit_code, family_name, kind_name, restriction_name, seconds, spectral_options,
    write_table,
};
use crate::config::{ChainKind, CutKind, Family, Plan};
use crate::output::{Row, Table};

const BASE: &[&str] = &[
    "row_type",
    "family",
    "q",
    "n",
    "mu",
    "beta",
    "h",
    "c",
    "m",
    "ladder_kind",
    "restriction",
    "chain_kind",
    "states",
];

pub fn gap_columns() -> Vec<&'static str> {
    let mut c = BASE.to_vec();
    c.extend([
        "gap",
        "relaxation_gap",
        "lambda_min",
        "method",
        "residual",
        "converged",
        "iterations",
        "tau",
        "tau_capped",
        "seconds",
        "fit_kind",
        "slope",
        "intercept",
        "max_residual",
        "error",
    ]);
    c
}

pub fn conductance_columns() -> Vec<&'static str> {
    let mut c = BASE.to_vec();
    c.extend([
        "cut_family",
        "threshold",
        "phi",
        "log_phi",
        "flow",
        "capacity",
        "pi_min",
        "tau_lower_bound",
        "log_tau_lower_bound",
        "seconds",
        "error",
    ]);
    c
}

/// Grid in output order: sizes outer, ladder kinds inner.
fn grid(plan: &Plan) -> Vec<(u32, LadderKind)> {
    plan.ns.iter().flat_map(|&n| plan.kinds.iter().map(move |&k| (n, k))).collect()
}

fn describe(plan: &Plan, row: &mut Row, n: u32, kind: LadderKind) {
    row.set("row_type", "point")
        .set("family", family_name(plan))
        .set("ladder_kind", kind_name(kind))
        .set("restriction", restriction_name(plan))
        .set("chain_kind", plan.chain.as_str());
    if plan.family == Family::Exp {
        row.set("c", plan.c);
        if n > 0 {
            row.set("n", n);
        }
        row.set("m", plan.m_at(n));
    } else {
        row.set("q", plan.q)
            .set("n", n)
            .set("mu", plan.mu_at(n))
            .set("beta", plan.beta_at(n))
            .set("h", plan.fields[0])
            .set("m", plan.m_at(n));
    }
}

fn dump_name(plan: &Plan, n: u32, kind: LadderKind) -> String {
    format!("{}_n{n}_{}_{}", plan.command.name(), kind_name(kind), plan.chain.as_str())
}

struct GapPoint {
    states: usize,
    report: tempering_core::analysis::SpectralReport,
    tau: Option<(u64, bool)>,
    seconds: Option<f64>,
}

fn gap_point(plan: &Plan, n: u32, kind: LadderKind) -> Result<GapPoint> {
    let start = Instant::now();
    let ladder = plan.ladder_at(n, kind)?;
    let chain = build_chain(plan, &ladder, plan.chain)?;
    dump(plan, &dump_name(plan, n, kind), &chain).map_err(|e| Error::InvalidParameter(format!("dump: {e}")))?;
    let report = spectral_gap_with(&chain, &spectral_options(plan))?;
    let tau = if plan.tv {
        let t = tv_mixing_time(&chain, plan.epsilon)?;
        Some((t.t, t.lower_bound))
    } else {
        None
    };
    Ok(GapPoint { states: chain.len(), report, tau, seconds: seconds(plan, start) })
}

fn method_name(m: SpectralMethod) -> &'static str {
    match m {
        SpectralMethod::Auto => "auto",
        SpectralMethod::Dense => "dense",
        SpectralMethod::Iterative => "iterative",
    }
}

fn fit_name(k: FitKind) -> &'static str {
    match k {
        FitKind::ExpInN => "EXP_IN_N",
        FitKind::PolyInN => "POLY_IN_N",
    }
}

pub fn gap(plan: &Plan) -> io::Result<i32> {
    let points = grid(plan);
    let results: Vec<Result<GapPoint>> = points.par_iter().map(|&(n, k)| gap_point(plan, n, k)).collect();
    let mut table = Table::new("scan-gap", &gap_columns());
    let mut errors = 0;
    for (&(n, kind), res) in points.iter().zip(&results) {
        let mut r = table.row();
        describe(plan, &mut r, n, kind);
        match res {
            Ok(p) => {
                r.set("states", p.states)
                    .set("gap", p.report.gap)
                    .set("relaxation_gap", p.report.relaxation_gap())
                    .set("lambda_min", p.report.lambda_min)
                    .set("method", method_name(p.report.method))
                    .set("residual", p.report.residual)
                    .set("converged", p.report.converged)
                    .set("iterations", p.report.iterations)
                    .set("seconds", p.seconds);
                if let Some((t, capped)) = p.tau {
                    r.set("tau", t).set("tau_capped", capped);
                }
            }
            Err(e) => {
                errors += 1;
                r.set("error", error_cell(e));
            }
        }
        table.push(r);
    }

    // Decay fits of the gap against n, one pair per ladder kind.
    for &kind in &plan.kinds {
        let pts: Vec<(f64, f64)> = points
            .iter()
            .zip(&results)
            .filter(|((n, k), _)| *k == kind && *n > 0)
            .filter_map(|((n, _), res)| res.as_ref().ok().map(|p| (*n as f64, p.report.gap)))
            .collect();
        if pts.len() < 3 {
            continue;
        }
        for fk in [FitKind::ExpInN, FitKind::PolyInN] {
            let mut r = table.row();
            r.set("row_type", "fit")
                .set("family", family_name(plan))
                .set("ladder_kind", kind_name(kind))
                .set("restriction", restriction_name(plan))
                .set("chain_kind", plan.chain.as_str())
                .set("fit_kind", fit_name(fk));
            match fit_decay(&pts, fk) {
                Ok(f) => {
                    r.set("slope", f.slope).set("intercept", f.intercept).set("max_residual", f.max_residual);
                }
                Err(e) => {
                    r.set("error", error_cell(&e));
                }
            }
            table.push(r);
        }
    }
    write_table(plan, &table, plan.out.as_deref())?;
    Ok(exit_code(plan, errors, 0))
}

struct CutPoint {
    states: Option<usize>,
    family: String,
    threshold: Option<i64>,
    phi: f64,
    log_phi: f64,
    flow: f64,
    capacity: f64,
    pi_min: Option<f64>,
    seconds: Option<f64>,
}

fn cut_point(plan: &Plan, n: u32, kind: LadderKind) -> Result<CutPoint> {
    let start = Instant::now();
    let ladder = plan.ladder_at(n, kind)?;

    // The no-majority cut of the tempering chain streams over the cut
    // boundary and never builds the chain.
    let streams = plan.cut == CutKind::NoMajority
        && plan.chain == ChainKind::Tempering
        && kind == LadderKind::Tempered
        && plan.restriction == tempering_core::models::Restriction::None
        && plan.dump_dir.is_none();
    if streams {
        let s = no_majority_from_ladder(&ladder)?;
        return Ok(CutPoint {
            states: None,
            family: format!("max_count<={}", n / 2),
            threshold: Some((n / 2) as i64),
            phi: s.phi,
            log_phi: s.log_phi,
            flow: s.log_flow.exp(),
            capacity: s.log_capacity.exp(),
            pi_min: None,
            seconds: seconds(plan, start),
        });
    }

    let chain = build_chain(plan, &ladder, plan.chain)?;
    dump(plan, &dump_name(plan, n, kind), &chain).map_err(|e| Error::InvalidParameter(format!("dump: {e}")))?;
    let rep = match plan.cut {
        CutKind::Threshold | CutKind::MaxCount => {
            min_threshold_conductance(&chain, plan.cut.family().expect("threshold family"))?
        }
        CutKind::NoMajority => {
            let mut r = cut_conductance(&chain, &CutSet::no_majority(&chain, n)?)?;
            r.threshold = Some((n / 2) as i64);
            r
        }
        CutKind::LambdaMin => {
            let Model::Potts(pm) = &ladder.model else {
                return Err(Error::Unsupported("the lambda_min cut needs the Potts model".into()));
            };
            let (t, _) = bottleneck_index(n, pm.beta * n as f64)?;
            let mut r = cut_conductance(&chain, &CutSet::coordinate_below(&chain, t as i64 + 1)?)?;
            r.threshold = Some(t as i64);
            r
        }
    };
    let pi_min = chain.pi().into_iter().fold(1.0, f64::min);
    Ok(CutPoint {
        states: Some(chain.len()),
        family: rep.cut.family.clone(),
        threshold: rep.threshold,
        phi: rep.phi,
        log_phi: rep.log_phi,
        flow: rep.flow,
        capacity: rep.capacity,
        pi_min: Some(pi_min),
        seconds: seconds(plan, start),
    })
}

pub fn conductance(plan: &Plan) -> io::Result<i32> {
    let points = grid(plan);
    let results: Vec<Result<CutPoint>> = points.par_iter().map(|&(n, k)| cut_point(plan, n, k)).collect();
    let mut table = Table::new("scan-conductance", &conductance_columns());
    let mut errors = 0;
    for (&(n, kind), res) in points.iter().zip(&results) {
        let mut r = table.row();
        describe(plan, &mut r, n, kind);
        match res {
            Ok(p) => {
                r.set("states", p.states)
                    .set("cut_family", p.family.as_str())
                    .set("threshold", p.threshold)
                    .set("phi", p.phi)
                    .set("log_phi", p.log_phi)
                    .set("flow", p.flow)
                    .set("capacity", p.capacity)
                    .set("pi_min", p.pi_min)
                    .set("log_tau_lower_bound", log_conductance_lower_bound(p.log_phi, plan.epsilon))
                    .set("seconds", p.seconds);
                if let Some(pm) = p.pi_min.filter(|&x| x < 1.0) {
                    if let Ok(b) = conductance_mixing_bounds(p.phi.min(1.0), pm, plan.epsilon) {
                        r.set("tau_lower_bound", b.lower);
                    }
                }
            }
            Err(e) => {
                errors += 1;
                r.set("error", error_cell(e));
            }
        }
        table.push(r);
    }
    write_table(plan, &table, plan.out.as_deref())?;
    Ok(exit_code(plan, errors, 0))
}
