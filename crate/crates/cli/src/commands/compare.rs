use std::io;
use std::time::Instant;

use rayon::prelude::*;
use tempering_core::analysis::{conductance, fit_decay, spectral_gap_with, FitKind};
use tempering_core::lumped::{bottleneck_index, build_level_chain, build_tempering_chain, CutSet, LumpedChain};
use tempering_core::models::{make_ladder, LadderKind, PottsModel, Restriction};
use tempering_core::Result;

use super::{dump, error_cell, exit_code, seconds, spectral_options, write_table};
use crate::config::Plan;
use crate::output::Table;

pub const COLUMNS: &[&str] = &[
    "row_type",
    "n",
    "mu",
    "m",
    "t_min",
    "t_fallback",
    "metropolis_states",
    "tempering_states",
    "metropolis_gap",
    "tempering_gap",
    "ratio",
    "metropolis_phi",
    "tempering_phi",
    "fit_kind",
    "slope",
    "intercept",
    "max_residual",
    "seconds",
    "error",
];

struct Point {
    t: u32,
    fallback: bool,
    states: (usize, usize),
    gaps: (f64, f64),
    phis: (f64, f64),
    seconds: Option<f64>,
}

/// `Φ` of `{σ_1 ≤ t}` with capacity `π(S)`.
fn bottleneck_phi(chain: &LumpedChain, t: u32) -> Result<f64> {
    Ok(conductance(chain, &CutSet::coordinate_below(chain, t as i64 + 1)?)?.phi)
}

fn point(plan: &Plan, n: u32) -> Result<Point> {
    let start = Instant::now();
    let mu = plan.mu_at(n);
    let ladder =
        make_ladder(PottsModel::from_mu(3, n, mu)?, plan.m_at(n), LadderKind::Tempered, plan.schedule.clone())?;
    let metro = build_level_chain(&ladder, ladder.top(), Restriction::Rgb)?;
    let temper = build_tempering_chain(&ladder, Restriction::Rgb)?;
    dump(plan, &format!("compare-rgb_n{n}_metropolis"), &metro).map_err(dump_err)?;
    dump(plan, &format!("compare-rgb_n{n}_tempering"), &temper).map_err(dump_err)?;
    let opts = spectral_options(plan);
    let gm = spectral_gap_with(&metro, &opts)?.gap;
    let gt = spectral_gap_with(&temper, &opts)?.gap;
    let (t, fallback) = bottleneck_index(n, mu)?;
    Ok(Point {
        t,
        fallback,
        states: (metro.len(), temper.len()),
        gaps: (gm, gt),
        phis: (bottleneck_phi(&metro, t)?, bottleneck_phi(&temper, t)?),
        seconds: seconds(plan, start),
    })
}

fn dump_err(e: io::Error) -> tempering_core::Error {
    tempering_core::Error::InvalidParameter(format!("dump: {e}"))
}

pub fn run(plan: &Plan) -> io::Result<i32> {
    let results: Vec<Result<Point>> = plan.ns.par_iter().map(|&n| point(plan, n)).collect();
    let mut table = Table::new("compare-rgb", COLUMNS);
    let mut errors = 0;
    let mut trend = Vec::new();
    for (&n, res) in plan.ns.iter().zip(&results) {
        let mut r = table.row();
        r.set("row_type", "point").set("n", n).set("mu", plan.mu_at(n)).set("m", plan.m_at(n));
        match res {
            Ok(p) => {
                let ratio = p.gaps.1 / p.gaps.0;
                trend.push((n as f64, ratio));
                r.set("t_min", p.t)
                    .set("t_fallback", p.fallback)
                    .set("metropolis_states", p.states.0)
                    .set("tempering_states", p.states.1)
                    .set("metropolis_gap", p.gaps.0)
                    .set("tempering_gap", p.gaps.1)
                    .set("ratio", ratio)
                    .set("metropolis_phi", p.phis.0)
                    .set("tempering_phi", p.phis.1)
                    .set("seconds", p.seconds);
            }
            Err(e) => {
                errors += 1;
                r.set("error", error_cell(e));
            }
        }
        table.push(r);
    }
    // Trend of the tempering/Metropolis gap ratio in n.
    if trend.len() >= 3 {
        for fk in [FitKind::ExpInN, FitKind::PolyInN] {
            let mut r = table.row();
            r.set("row_type", "trend").set("fit_kind", if fk == FitKind::ExpInN { "EXP_IN_N" } else { "POLY_IN_N" });
            match fit_decay(&trend, fk) {
                Ok(f) => {
                    r.set("slope", f.slope).set("intercept", f.intercept).set("max_residual", f.max_residual);
                }
                Err(e) => {
                    r.set("error", error_cell(&e));
                }
            }
            table.push(r);
        }
    } else if trend.len() == 2 {
        let ((n0, r0), (n1, r1)) = (trend[0], trend[1]);
        let mut r = table.row();
        r.set("row_type", "trend").set("fit_kind", "ENDPOINTS").set("slope", (r1.ln() - r0.ln()) / (n1 - n0));
        table.push(r);
    }
    write_table(plan, &table, plan.out.as_deref())?;
    Ok(exit_code(plan, errors, 0))
}
