//! Decomposition bound `Gap(P) ≥ ½ · Gap(P̄) · min_i Gap(P_i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lumped::{ChainMeta, CsrMatrix, LumpedChain, StateLabel};
use crate::numeric::LogSumExp;

use super::spectral::{spectral_gap_with, SpectralMethod, SpectralOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub gap: f64,
    pub projection_gap: f64,
    pub min_restriction_gap: f64,
    /// `½ · projection_gap · min_restriction_gap`.
    pub bound: f64,
    pub holds: bool,
    pub parts: usize,
}

/// Restriction of `chain` to the states with `labels[x] == part`; moves
/// leaving the part are folded into the diagonal.
pub fn restriction(chain: &LumpedChain, labels: &[usize], part: usize) -> LumpedChain {
    let members: Vec<usize> = (0..chain.len()).filter(|&x| labels[x] == part).collect();
    let mut local = vec![usize::MAX; chain.len()];
    for (k, &x) in members.iter().enumerate() {
        local[x] = k;
    }
    let rows = members
        .iter()
        .map(|&x| {
            chain.matrix.row(x).filter(|&(y, _)| y != x && labels[y] == part).map(|(y, p)| (local[y], p)).collect()
        })
        .collect();
    LumpedChain::new(
        members.iter().map(|&x| chain.states[x].clone()).collect(),
        CsrMatrix::from_offdiag_rows(rows),
        members.iter().map(|&x| chain.stationary_log[x]).collect(),
        ChainMeta::new("restriction").with("part", part),
    )
}

/// `P̄(a, b) = (1/π̄(a)) Σ_{x∈a, y∈b} π(x) P(x, y)` on parts `0..k`.
pub fn projection(chain: &LumpedChain, labels: &[usize], parts: usize) -> LumpedChain {
    let lp = chain.log_pi();
    let mut part_mass = vec![LogSumExp::new(); parts];
    for x in 0..chain.len() {
        part_mass[labels[x]].push(lp[x]);
    }
    let log_mass: Vec<f64> = part_mass.iter().map(|m| m.value()).collect();
    let mut rows = vec![vec![0.0f64; parts]; parts];
    for x in 0..chain.len() {
        let a = labels[x];
        let w = (lp[x] - log_mass[a]).exp();
        for (y, p) in chain.matrix.row(x) {
            let b = labels[y];
            if a != b {
                rows[a][b] += w * p;
            }
        }
    }
    let rows = rows.into_iter().map(|r| r.into_iter().enumerate().filter(|e| e.1 > 0.0).collect()).collect();
    LumpedChain::new(
        (0..parts).map(|i| StateLabel::Index { i }).collect(),
        CsrMatrix::from_offdiag_rows(rows),
        log_mass,
        ChainMeta::new("projection").with("parts", parts),
    )
}

/// Evaluates the decomposition inequality for a partition given as part
/// labels `0..k`. Singleton restrictions count as gap 1.
pub fn decomposition_check(chain: &LumpedChain, labels: &[usize]) -> Result<DecompositionReport> {
    if labels.len() != chain.len() {
        return Err(Error::InvalidParameter(format!("{} labels for {} states", labels.len(), chain.len())));
    }
    let parts = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; parts];
    for &l in labels {
        sizes[l] += 1;
    }
    if parts < 2 || sizes.contains(&0) {
        return Err(Error::InvalidParameter("the partition needs at least two non-empty parts labelled 0..k".into()));
    }
    let dense = SpectralOptions { method: SpectralMethod::Dense, ..Default::default() };
    let gap = spectral_gap_with(chain, &dense)?.gap;
    let projection_gap = spectral_gap_with(&projection(chain, labels, parts), &dense)?.gap;
    let mut min_restriction_gap = f64::INFINITY;
    for (part, &size) in sizes.iter().enumerate() {
        let g = if size == 1 { 1.0 } else { spectral_gap_with(&restriction(chain, labels, part), &dense)?.gap };
        min_restriction_gap = min_restriction_gap.min(g);
    }
    let bound = 0.5 * projection_gap * min_restriction_gap;
    Ok(DecompositionReport { gap, projection_gap, min_restriction_gap, bound, holds: gap >= bound - 1e-12, parts })
}
