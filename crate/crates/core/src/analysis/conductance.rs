//! Conductance of explicit cuts, threshold families, exhaustive search on
//! tiny chains, and a streaming evaluator for the no-majority cut of the
//! tempering chain at sizes where the chain is never built.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lumped::{CutSet, LumpedChain, StateLabel};
use crate::models::{make_ladder_with, Ladder, LadderKind, LadderOptions, PottsModel};
use crate::numeric::{ln_factorial, LogSumExp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductanceReport {
    /// `flow / capacity`.
    pub phi: f64,
    /// `Σ_{x∈S, y∉S} π(x) P(x,y)`.
    pub flow: f64,
    pub capacity: f64,
    pub log_phi: f64,
    pub log_flow: f64,
    pub log_capacity: f64,
    /// Threshold `t` of `{coordinate < t}` for family minimizers.
    pub threshold: Option<i64>,
    pub cut: CutSet,
}

impl ConductanceReport {
    fn from_logs(log_flow: f64, log_capacity: f64, cut: CutSet, threshold: Option<i64>) -> Self {
        let log_phi = log_flow - log_capacity;
        ConductanceReport {
            phi: log_phi.exp(),
            flow: log_flow.exp(),
            capacity: log_capacity.exp(),
            log_phi,
            log_flow,
            log_capacity,
            threshold,
            cut,
        }
    }
}

fn log_flow_out(chain: &LumpedChain, log_pi: &[f64], members: &[bool]) -> f64 {
    let mut acc = LogSumExp::new();
    for i in (0..chain.len()).filter(|&i| members[i]) {
        for (j, p) in chain.matrix.row(i) {
            if !members[j] && p > 0.0 {
                acc.push(log_pi[i] + p.ln());
            }
        }
    }
    acc.value()
}

fn log_mass(log_pi: &[f64], members: &[bool]) -> f64 {
    let mut acc = LogSumExp::new();
    for (l, _) in log_pi.iter().zip(members).filter(|(_, m)| **m) {
        acc.push(*l);
    }
    acc.value()
}

/// `Φ_S = F_S / π(S)`.
pub fn conductance(chain: &LumpedChain, cut: &CutSet) -> Result<ConductanceReport> {
    if cut.members.len() != chain.len() {
        return Err(Error::InvalidCut(format!("cut has {} flags for {} states", cut.members.len(), chain.len())));
    }
    let cut = CutSet::new(cut.members.clone(), cut.family.clone())?;
    let lp = chain.log_pi();
    Ok(ConductanceReport::from_logs(log_flow_out(chain, &lp, &cut.members), log_mass(&lp, &cut.members), cut, None))
}

/// Which state statistic a nested threshold family cuts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdFamily {
    /// [`StateLabel::coordinate`]: `σ_1`, `x`, or the number of ones.
    Coordinate,
    /// Largest color count.
    MaxCount,
}

impl ThresholdFamily {
    fn value(&self, s: &StateLabel) -> Result<i64> {
        match self {
            ThresholdFamily::Coordinate => Ok(s.coordinate()),
            ThresholdFamily::MaxCount => {
                s.max_count().ok_or_else(|| Error::InvalidCut("max-count family needs class states".into()))
            }
        }
    }

    fn name(&self) -> &'static str {
        match self {
            ThresholdFamily::Coordinate => "coordinate",
            ThresholdFamily::MaxCount => "max_count",
        }
    }
}

/// Minimizes `F_S / min(π(S), π(S^c))` over `S_t = {value < t}`. The
/// minimum is over this one-parameter family only, not over all subsets.
/// Near-ties (relative 1e-9) resolve to the smallest threshold.
pub fn min_threshold_conductance(chain: &LumpedChain, family: ThresholdFamily) -> Result<ConductanceReport> {
    let values: Vec<i64> = chain.states.iter().map(|s| family.value(s)).collect::<Result<_>>()?;
    let mut distinct = values.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Degenerate("the cut family has a single value; no proper cut".into()));
    }
    let lp = chain.log_pi();
    let mut best: Option<ConductanceReport> = None;
    for &t in &distinct[1..] {
        let members: Vec<bool> = values.iter().map(|&v| v < t).collect();
        let inside = log_mass(&lp, &members);
        let outside = log_mass(&lp, &members.iter().map(|m| !m).collect::<Vec<_>>());
        let cap = inside.min(outside);
        let flow = log_flow_out(chain, &lp, &members);
        let cut = CutSet { members, family: format!("{}<{t}", family.name()) };
        let rep = ConductanceReport::from_logs(flow, cap, cut, Some(t));
        let better = match &best {
            None => true,
            Some(b) => rep.log_phi < b.log_phi - 1e-9,
        };
        if better {
            best = Some(rep);
        }
    }
    Ok(best.expect("at least one threshold"))
}

/// Largest chain accepted by [`exhaustive_conductance`].
pub const EXHAUSTIVE_MAX_STATES: usize = 18;

/// Global conductance `min_{π(S) ≤ 1/2} F_S / π(S)` by subset enumeration.
pub fn exhaustive_conductance(chain: &LumpedChain) -> Result<ConductanceReport> {
    let n = chain.len();
    if n > EXHAUSTIVE_MAX_STATES {
        return Err(Error::StateCap {
            count: n as f64,
            cap: EXHAUSTIVE_MAX_STATES,
            hint: "exhaustive cut search is limited to 18 states",
        });
    }
    if n < 2 {
        return Err(Error::Degenerate("a single state has no cuts".into()));
    }
    let pi = chain.pi();
    let edges: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| chain.matrix.row(i).filter(move |e| e.0 != i).map(move |(j, p)| (i, j, p)))
        .map(|(i, j, p)| (i, j, pi[i] * p))
        .collect();
    let mut best: Option<(f64, u32)> = None;
    for mask in 1u32..(1u32 << n) - 1 {
        let mass: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| pi[i]).sum();
        if mass > 0.5 + 1e-12 {
            continue;
        }
        let flow: f64 = edges.iter().filter(|e| mask >> e.0 & 1 == 1 && mask >> e.1 & 1 == 0).map(|e| e.2).sum();
        let phi = flow / mass;
        if best.is_none_or(|b| phi < b.0) {
            best = Some((phi, mask));
        }
    }
    let (_, mask) = best.ok_or_else(|| Error::Degenerate("no subset with π(S) ≤ 1/2".into()))?;
    let members = (0..n).map(|i| mask >> i & 1 == 1).collect();
    let mut rep = conductance(chain, &CutSet::new(members, "exhaustive")?)?;
    rep.cut.family = "exhaustive".into();
    Ok(rep)
}

/// Result of the streaming no-majority cut evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamingConductance {
    pub n: u32,
    pub levels: usize,
    pub log_flow: f64,
    pub log_capacity: f64,
    pub log_phi: f64,
    pub phi: f64,
}

/// Visits every composition of `remaining` into `cur.len() - pos` parts
/// with each part at most `ub`.
fn for_each_bounded(remaining: u32, ub: u32, pos: usize, cur: &mut [u32], visit: &mut impl FnMut(&[u32])) {
    let slots = (cur.len() - pos) as u32;
    if remaining > ub.saturating_mul(slots) {
        return;
    }
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        visit(cur);
        return;
    }
    for v in 0..=remaining.min(ub) {
        cur[pos] = v;
        for_each_bounded(remaining - v, ub, pos + 1, cur, visit);
    }
}

/// Conductance of `S = {(σ, i) : all σ_m ≤ n/2}` for the tempering chain
/// of a tempered Potts ladder, summing only over `S` and its boundary.
///
/// Only level moves leave `S` (temperature moves keep `σ`), so
/// `F_S = (1/(M+1)) Σ_i Σ_{σ ∈ ∂S} π_i(σ) · ½ · Σ_{exits} P_i(σ, σ')`.
pub fn tempering_no_majority_conductance(model: &PottsModel, m: usize) -> Result<StreamingConductance> {
    let ladder =
        make_ladder_with(model.clone(), m, LadderKind::Tempered, None, LadderOptions { state_cap: usize::MAX })?;
    no_majority_from_ladder(&ladder)
}

pub fn no_majority_from_ladder(ladder: &Ladder) -> Result<StreamingConductance> {
    let pm = ladder.require_potts()?;
    let (n, q) = (pm.n, pm.q);
    let half = n / 2;
    if (half as u64) * (q as u64) < n as u64 {
        return Err(Error::InvalidCut("no class has all counts at most n/2".into()));
    }
    let m1 = ladder.levels();
    let per_level: Vec<(LogSumExp, LogSumExp)> = (0..m1)
        .into_par_iter()
        .map(|i| {
            let log_z = ladder.log_partitions[i];
            let weight = |c: &[u32]| ladder.class_weight_counts(pm, i, c) - log_z;
            let cfg = |c: &[u32]| {
                let lm = ln_factorial(n as u64) - c.iter().map(|&x| ln_factorial(x as u64)).sum::<f64>();
                ladder.class_weight_counts(pm, i, c) - lm
            };
            let mut cap = LogSumExp::new();
            let mut flow = LogSumExp::new();
            let mut cur = vec![0u32; q];
            let mut tgt = vec![0u32; q];
            for_each_bounded(n, half, 0, &mut cur, &mut |c| {
                let w = weight(c);
                cap.push(w);
                if !c.contains(&half) {
                    return;
                }
                let here = cfg(c);
                for b in (0..q).filter(|&b| c[b] == half) {
                    for a in (0..q).filter(|&a| a != b && c[a] > 0) {
                        tgt.copy_from_slice(c);
                        tgt[a] -= 1;
                        tgt[b] += 1;
                        let acc = (cfg(&tgt) - here).min(0.0);
                        let pick = (c[a] as f64 / n as f64 / q as f64).ln();
                        flow.push(w + pick + acc + 0.5f64.ln());
                    }
                }
            });
            (flow, cap)
        })
        .collect();
    let mut flow = LogSumExp::new();
    let mut cap = LogSumExp::new();
    for (f, c) in &per_level {
        flow.merge(f);
        cap.merge(c);
    }
    let level_mass = -(m1 as f64).ln();
    let log_flow = flow.value() + level_mass;
    let log_capacity = cap.value() + level_mass;
    Ok(StreamingConductance {
        n,
        levels: m1,
        log_flow,
        log_capacity,
        log_phi: log_flow - log_capacity,
        phi: (log_flow - log_capacity).exp(),
    })
}
