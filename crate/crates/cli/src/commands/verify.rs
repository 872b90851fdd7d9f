use std::io;

use rayon::prelude::*;
use tempering_core::analysis::lemmas::{lemma_suite, ItemStatus};

use super::{error_cell, exit_code, write_table};
use crate::config::Plan;
use crate::output::Table;

pub const COLUMNS: &[&str] = &["code", "item", "n", "mu", "m", "status", "value", "detail", "error"];

/// Letter of the suite section an item belongs to.
fn section(item: &str) -> &'static str {
    match item {
        "half_line_argmax" | "boundary_ratio_monotone" => "a",
        "bottleneck_line_argmax" | "ordered_lines_argmax" => "b",
        "mass_balance_point" | "disordered_mass_floor" => "c",
        "mode_ratio" | "mode_ratio_slope" => "d",
        "disordered_mass_grows" | "disordered_outgrows_bottleneck" => "e",
        "balanced_line_shape" => "f",
        "ising_symmetric_trace" => "g",
        _ => "",
    }
}

pub fn run(plan: &Plan) -> io::Result<i32> {
    let results: Vec<_> = plan.ns.par_iter().map(|&n| (n, lemma_suite(n, plan.mu_at(n), plan.m_at(n)))).collect();
    let mut table = Table::new("verify", COLUMNS);
    let (mut errors, mut failures) = (0, 0);
    for (n, res) in results {
        match res {
            Ok(items) => {
                for it in items {
                    failures += (it.status == ItemStatus::Fail) as usize;
                    let mut r = table.row();
                    r.set("code", section(&it.item))
                        .set("item", it.item.as_str())
                        .set("n", n)
                        .set("mu", plan.mu_at(n))
                        .set("m", plan.m_at(n))
                        .set("status", it.status.as_str())
                        .set("value", it.value)
                        .set("detail", it.detail);
                    table.push(r);
                }
            }
            Err(e) => {
                errors += 1;
                let mut r = table.row();
                r.set("n", n)
                    .set("mu", plan.mu_at(n))
                    .set("m", plan.m_at(n))
                    .set("status", "ERROR")
                    .set("error", error_cell(&e));
                table.push(r);
            }
        }
    }
    write_table(plan, &table, plan.out.as_deref())?;
    Ok(exit_code(plan, errors, failures))
}
