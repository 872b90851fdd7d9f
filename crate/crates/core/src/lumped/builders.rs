//! Level (Metropolis), simulated-tempering and swapping chains.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{ExpModel, Ladder, Restriction};

use super::space::LevelSpace;
use super::{ChainMeta, CsrMatrix, LumpedChain, DEFAULT_CHAIN_CAP};

fn ladder_meta(name: &str, ladder: &Ladder, restriction: Restriction) -> ChainMeta {
    let meta = ChainMeta::new(name)
        .with("kind", format!("{:?}", ladder.kind).to_lowercase())
        .with("levels", ladder.levels())
        .with("restriction", format!("{restriction:?}").to_lowercase());
    match &ladder.model {
        crate::models::Model::Potts(p) => meta.with("q", p.q).with("n", p.n).with("beta", p.beta),
        crate::models::Model::Exp(e) => meta.with("C", e.c).with("N", e.n_neg).with("Nprime", e.n_pos),
    }
}

/// Single-vertex Metropolis chain targeting one level of the ladder.
///
/// From `σ` the chain picks a vertex (a color-`a` vertex with probability
/// `σ_a/n`) and a uniform color `b`; the recoloring is accepted with the
/// Metropolis ratio of per-configuration weights.
pub fn build_level_chain(ladder: &Ladder, level: usize, restriction: Restriction) -> Result<LumpedChain> {
    ladder.check_level(level)?;
    let space = LevelSpace::from_ladder(ladder, restriction, DEFAULT_CHAIN_CAP)?;
    Ok(level_chain_from_space(&space, level, ladder_meta("level", ladder, restriction).with("level", level)))
}

pub(crate) fn level_chain_from_space(space: &LevelSpace, level: usize, meta: ChainMeta) -> LumpedChain {
    LumpedChain::new(
        (0..space.len()).map(|p| space.label(p)).collect(),
        CsrMatrix::from_offdiag_rows(space.kernels[level].clone()),
        space.log_cls[level].clone(),
        meta,
    )
}

/// Nearest-neighbour Metropolis walk on `[-N, N']` for `π ∝ C^{e|x|}`.
pub fn build_exp_level_chain(model: &ExpModel, exponent: f64) -> Result<LumpedChain> {
    if !(0.0..=1.0).contains(&exponent) {
        return Err(Error::InvalidParameter(format!("exponent {exponent} outside [0, 1]")));
    }
    let space = LevelSpace::exp_single(model, exponent, DEFAULT_CHAIN_CAP)?;
    let meta = ChainMeta::new("exp-level")
        .with("C", model.c)
        .with("N", model.n_neg)
        .with("Nprime", model.n_pos)
        .with("exponent", exponent);
    Ok(level_chain_from_space(&space, 0, meta))
}

/// Simulated tempering on `(σ, level)`.
///
/// With probability 1/2 a level move at the current level; otherwise a
/// temperature move to `i ± 1` (each proposed with probability 1/2, holding
/// when out of range) accepted with the ratio of normalized
/// per-configuration weights. The stationary level marginal is uniform.
pub fn build_tempering_chain(ladder: &Ladder, restriction: Restriction) -> Result<LumpedChain> {
    let space = LevelSpace::from_ladder(ladder, restriction, DEFAULT_CHAIN_CAP)?;
    let m1 = space.levels();
    let np = space.len();
    let total = np as f64 * m1 as f64;
    if total > DEFAULT_CHAIN_CAP as f64 {
        return Err(Error::StateCap {
            count: total,
            cap: DEFAULT_CHAIN_CAP,
            hint: "use the streaming conductance or Monte Carlo for larger ladders",
        });
    }
    let idx = |p: usize, level: usize| level * np + p;
    let rows: Vec<Vec<(usize, f64)>> = (0..m1 * np)
        .into_par_iter()
        .map(|s| {
            let (level, p) = (s / np, s % np);
            let mut row: Vec<(usize, f64)> =
                space.kernels[level][p].iter().map(|&(t, pr)| (idx(t, level), 0.5 * pr)).collect();
            let here = space.log_cfg[level][p] - space.log_z[level];
            for j in [level.wrapping_sub(1), level + 1] {
                if j >= m1 {
                    continue;
                }
                let there = space.log_cfg[j][p] - space.log_z[j];
                row.push((idx(p, j), 0.25 * (there - here).exp().min(1.0)));
            }
            row
        })
        .collect();
    let states = (0..m1 * np).map(|s| space.tempered_label(s % np, s / np)).collect();
    let stationary = (0..m1 * np).map(|s| space.log_pi(s / np, s % np)).collect();
    Ok(LumpedChain::new(
        states,
        CsrMatrix::from_offdiag_rows(rows),
        stationary,
        ladder_meta("tempering", ladder, restriction),
    ))
}

#[derive(Debug, Clone, Copy)]
pub struct SwapOptions {
    /// When false the chain only makes level moves, each level chosen with
    /// probability `1/(M+1)`.
    pub swaps: bool,
    pub state_cap: usize,
}

impl Default for SwapOptions {
    fn default() -> Self {
        SwapOptions { swaps: true, state_cap: DEFAULT_CHAIN_CAP }
    }
}

/// Swapping (parallel tempering) chain on `(σ_0, …, σ_M)`.
///
/// Level `i` moves with probability `1/(2(M+1))`, adjacent swaps `(i, i+1)`
/// with probability `1/(2M)` and Metropolis acceptance on the exchanged
/// per-configuration weights.
pub fn build_swap_chain(ladder: &Ladder, restriction: Restriction) -> Result<LumpedChain> {
    build_swap_chain_with(ladder, restriction, SwapOptions::default())
}

pub fn build_exp_swap_chain(ladder: &Ladder) -> Result<LumpedChain> {
    ladder.require_exp()?;
    build_swap_chain(ladder, Restriction::None)
}

pub fn build_swap_chain_with(ladder: &Ladder, restriction: Restriction, opts: SwapOptions) -> Result<LumpedChain> {
    let space = LevelSpace::from_ladder(ladder, restriction, opts.state_cap)?;
    let m1 = space.levels();
    let np = space.len();
    let total = (np as f64).powi(m1 as i32);
    if total > opts.state_cap as f64 {
        return Err(Error::StateCap {
            count: total,
            cap: opts.state_cap,
            hint: "the product space is too large; use the trace projection or Monte Carlo",
        });
    }
    let total = total as usize;
    let m = m1 - 1;
    let level_weight = if opts.swaps && m > 0 { 0.5 / m1 as f64 } else { 1.0 / m1 as f64 };
    let swap_weight = if m > 0 { 0.5 / m as f64 } else { 0.0 };
    let strides: Vec<usize> = (0..m1).map(|i| np.pow((m - i) as u32)).collect();
    let decode = |mut s: usize| -> Vec<usize> {
        let mut ps = vec![0; m1];
        for i in (0..m1).rev() {
            ps[i] = s % np;
            s /= np;
        }
        ps
    };
    let rows: Vec<Vec<(usize, f64)>> = (0..total)
        .into_par_iter()
        .map(|s| {
            let ps = decode(s);
            let mut row = Vec::new();
            for i in 0..m1 {
                for &(t, pr) in &space.kernels[i][ps[i]] {
                    let target = s - ps[i] * strides[i] + t * strides[i];
                    row.push((target, level_weight * pr));
                }
            }
            if opts.swaps {
                for i in 0..m {
                    let (a, b) = (ps[i], ps[i + 1]);
                    if a == b {
                        continue;
                    }
                    let dw =
                        space.log_cfg[i][b] + space.log_cfg[i + 1][a] - space.log_cfg[i][a] - space.log_cfg[i + 1][b];
                    let target = s - a * strides[i] - b * strides[i + 1] + b * strides[i] + a * strides[i + 1];
                    row.push((target, swap_weight * dw.exp().min(1.0)));
                }
            }
            row
        })
        .collect();
    let states = (0..total).map(|s| space.product_label(&decode(s))).collect();
    let stationary = (0..total).map(|s| decode(s).iter().enumerate().map(|(i, &p)| space.log_pi(i, p)).sum()).collect();
    let meta = ladder_meta(if opts.swaps { "swap" } else { "product" }, ladder, restriction);
    Ok(LumpedChain::new(states, CsrMatrix::from_offdiag_rows(rows), stationary, meta))
}

/// Metropolis acceptance of exchanging configurations between two tempered
/// levels: `min(1, exp((β_{i+1} − β_i)(H_i − H_{i+1})))`.
pub fn swap_acceptance(beta_lo: f64, beta_hi: f64, h_lo: f64, h_hi: f64) -> f64 {
    ((beta_hi - beta_lo) * (h_lo - h_hi)).exp().min(1.0)
}
