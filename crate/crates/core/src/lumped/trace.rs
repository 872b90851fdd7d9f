//! Trace thresholds and the exact projection of the swapping chain onto
//! trace bit-vectors `{0,1}^{M+1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Ladder, Model, Restriction};

use super::space::LevelSpace;
use super::{ChainMeta, CsrMatrix, LumpedChain, StateLabel, DEFAULT_CHAIN_CAP};

/// Largest number of levels the hypercube projection accepts.
pub const MAX_TRACE_LEVELS: usize = 20;

/// Per-level thresholds: a component's trace bit is 1 iff its coordinate
/// (`σ_1` for Ising, `x` for the exponential family) is at least the level's
/// threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    pub thresholds: Vec<i64>,
    /// Whether the threshold is the minimum of that level's class
    /// distribution between the top level's two modes.
    pub level_is_minimum: Vec<bool>,
}

impl TraceSpec {
    pub fn uniform(threshold: i64, levels: usize) -> Self {
        TraceSpec { thresholds: vec![threshold; levels], level_is_minimum: vec![true; levels] }
    }

    pub fn bit(&self, level: usize, coord: i64) -> bool {
        coord >= self.thresholds[level]
    }
}

/// Deepest point of `p` that has a strictly larger value somewhere on each
/// side. A flat floor of adjacent equal points resolves to its upper end,
/// so a symmetric two-point floor splits the range evenly; other ties
/// resolve to the first index.
pub(crate) fn valley(p: &[f64]) -> Option<usize> {
    if p.len() < 3 {
        return None;
    }
    let mut left_max = vec![f64::NEG_INFINITY; p.len()];
    for k in 1..p.len() {
        left_max[k] = left_max[k - 1].max(p[k - 1]);
    }
    let mut right_max = vec![f64::NEG_INFINITY; p.len()];
    for k in (0..p.len() - 1).rev() {
        right_max[k] = right_max[k + 1].max(p[k + 1]);
    }
    let mut best: Option<usize> = None;
    for k in 1..p.len() - 1 {
        if !(p[k] < left_max[k] && p[k] < right_max[k]) {
            continue;
        }
        let replace = match best {
            None => true,
            Some(b) => {
                let tie = (p[k] - p[b]).abs() <= 1e-12 * p[b].abs();
                (p[k] < p[b] && !tie) || (tie && k == b + 1)
            }
        };
        if replace {
            best = Some(k);
        }
    }
    best
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = k;
        }
    }
    best
}

/// Threshold separating the two modes of the top-level class distribution.
///
/// Ising ladders use the deepest interior minimum of the level-M
/// distribution over `σ_1`; the exponential family uses 0.
pub fn trace_threshold(ladder: &Ladder) -> Result<TraceSpec> {
    match &ladder.model {
        Model::Exp(_) => Ok(TraceSpec::uniform(0, ladder.levels())),
        Model::Potts(pm) if pm.q == 2 => {
            let n = pm.n as usize;
            // Index by k = σ_1; enumerate order runs k = n, …, 0.
            let by_k = |level: usize| -> Result<Vec<f64>> {
                let mut p = ladder.class_distribution(level)?;
                p.reverse();
                Ok(p)
            };
            let top = by_k(ladder.top())?;
            let t = valley(&top).ok_or(Error::NoTrace)?;
            let left = argmax(&top[..t]);
            let right = t + 1 + argmax(&top[t + 1..]);
            let mut flags = Vec::with_capacity(ladder.levels());
            for level in 0..ladder.levels() {
                let p = by_k(level)?;
                let floor = p[left..=right].iter().cloned().fold(f64::INFINITY, f64::min);
                flags.push(p[t] <= floor * (1.0 + 1e-12));
            }
            debug_assert!(t < n);
            Ok(TraceSpec { thresholds: vec![t as i64; ladder.levels()], level_is_minimum: flags })
        }
        Model::Potts(_) => Err(Error::Unsupported("trace thresholds are defined for Ising (q = 2) ladders".into())),
    }
}

/// Exact projection of the swapping chain onto trace vectors.
///
/// `P̄(s, s') = (1/π̄(s)) Σ_{x ∈ Ω_s, y ∈ Ω_{s'}} π(x) P(x, y)`; by the
/// product structure only the moved coordinates need integrating.
pub fn build_trace_projection(ladder: &Ladder, trace: &TraceSpec) -> Result<LumpedChain> {
    if let Model::Potts(pm) = &ladder.model {
        if pm.q != 2 {
            return Err(Error::Unsupported("trace projection needs an Ising or exponential ladder".into()));
        }
    }
    let m1 = ladder.levels();
    if m1 > MAX_TRACE_LEVELS {
        return Err(Error::StateCap {
            count: 2f64.powi(m1 as i32),
            cap: 1 << MAX_TRACE_LEVELS,
            hint: "at most 20 levels fit the trace hypercube",
        });
    }
    if trace.thresholds.len() != m1 {
        return Err(Error::InvalidParameter(format!(
            "trace has {} thresholds for {m1} levels",
            trace.thresholds.len()
        )));
    }
    let space = LevelSpace::from_ladder(ladder, Restriction::None, DEFAULT_CHAIN_CAP)?;
    let lo = *space.coord.iter().min().expect("non-empty");
    let hi = *space.coord.iter().max().expect("non-empty");
    for &t in &trace.thresholds {
        if t <= lo || t > hi {
            return Err(Error::InvalidParameter(format!("threshold {t} is not interior to [{lo}, {hi}]")));
        }
    }
    let np = space.len();
    let side = |level: usize, p: usize| trace.bit(level, space.coord[p]) as usize;
    let pi: Vec<Vec<f64>> = (0..m1).map(|i| (0..np).map(|p| space.log_pi(i, p).exp()).collect()).collect();

    // Per-level side masses and the conditional probability of a bit flip.
    let mut mass = vec![[0.0f64; 2]; m1];
    let mut flip = vec![[0.0f64; 2]; m1];
    for i in 0..m1 {
        let mut flow = [0.0f64; 2];
        for p in 0..np {
            let b = side(i, p);
            mass[i][b] += pi[i][p];
            for &(t, pr) in &space.kernels[i][p] {
                if side(i, t) != b {
                    flow[b] += pi[i][p] * pr;
                }
            }
        }
        for b in 0..2 {
            flip[i][b] = flow[b] / mass[i][b];
        }
    }

    // swap[i][a][b][a'][b']: conditional probability that swapping levels
    // i, i+1 with traces (a, b) is accepted and lands on traces (a', b').
    let m = m1 - 1;
    let mut swap = vec![[[[[0.0f64; 2]; 2]; 2]; 2]; m];
    for i in 0..m {
        for x in 0..np {
            let a = side(i, x);
            for y in 0..np {
                if x == y {
                    continue;
                }
                let b = side(i + 1, y);
                let dw = space.log_cfg[i][y] + space.log_cfg[i + 1][x] - space.log_cfg[i][x] - space.log_cfg[i + 1][y];
                let acc = dw.exp().min(1.0);
                let w = pi[i][x] / mass[i][a] * pi[i + 1][y] / mass[i + 1][b] * acc;
                swap[i][a][b][side(i, y)][side(i + 1, x)] += w;
            }
        }
    }

    let level_weight = if m > 0 { 0.5 / m1 as f64 } else { 1.0 / m1 as f64 };
    let swap_weight = if m > 0 { 0.5 / m as f64 } else { 0.0 };
    let total = 1usize << m1;
    let bit = |s: usize, i: usize| (s >> i) & 1;
    let rows: Vec<Vec<(usize, f64)>> = (0..total)
        .map(|s| {
            let mut row = Vec::new();
            for i in 0..m1 {
                row.push((s ^ (1 << i), level_weight * flip[i][bit(s, i)]));
            }
            for i in 0..m {
                let (a, b) = (bit(s, i), bit(s, i + 1));
                for (a2, row_b) in swap[i][a][b].iter().enumerate() {
                    for (b2, &w) in row_b.iter().enumerate() {
                        if (a2, b2) != (a, b) {
                            let t = (s & !(0b11 << i)) | (a2 << i) | (b2 << (i + 1));
                            row.push((t, swap_weight * w));
                        }
                    }
                }
            }
            row
        })
        .collect();
    let states = (0..total).map(|s| StateLabel::Trace { bits: (0..m1).map(|i| bit(s, i) == 1).collect() }).collect();
    let stationary = (0..total).map(|s| (0..m1).map(|i| mass[i][bit(s, i)].ln()).sum()).collect();
    let meta =
        ChainMeta::new("trace-projection").with("levels", m1).with("thresholds", format!("{:?}", trace.thresholds));
    Ok(LumpedChain::new(states, CsrMatrix::from_offdiag_rows(rows), stationary, meta))
}
