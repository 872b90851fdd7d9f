//! Total-variation mixing times and the spectral / conductance bounds on them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lumped::LumpedChain;

#[derive(Debug, Clone, Copy)]
pub struct TvOptions {
    /// Largest chain handled by exact dense powers.
    pub dense_threshold: usize,
    /// Doubling stops at `2^max_doublings` steps.
    pub max_doublings: u32,
    /// Step cap of the sparse heuristic used above the dense threshold.
    pub heuristic_steps: u64,
}

impl Default for TvOptions {
    fn default() -> Self {
        TvOptions { dense_threshold: 1000, max_doublings: 30, heuristic_steps: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingTime {
    pub epsilon: f64,
    /// `min { t : max_x ‖P^t(x,·) − π‖_TV ≤ ε }`, or the cap when
    /// `lower_bound` is set.
    pub t: u64,
    /// The distance was still above `ε` at the cap.
    pub lower_bound: bool,
    /// Computed from a few mode starts rather than every state.
    pub heuristic: bool,
    /// Worst-start distance at `t`.
    pub distance: f64,
}

fn worst_tv(pt: &DMatrix<f64>, pi: &[f64]) -> f64 {
    (0..pt.nrows()).map(|x| 0.5 * (0..pt.ncols()).map(|y| (pt[(x, y)] - pi[y]).abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn tv_mixing_time(chain: &LumpedChain, epsilon: f64) -> Result<MixingTime> {
    tv_mixing_time_with(chain, epsilon, &TvOptions::default())
}

/// Worst-start mixing time.
///
/// Up to the dense threshold every start is tracked exactly: `P^{2^k}` is
/// squared until the distance drops below `ε`, then the exact crossing is
/// located by binary lifting over the stored powers (the worst-start
/// distance is non-increasing in `t`). Larger chains iterate sparse
/// distributions from the mode states and flag the result as heuristic.
pub fn tv_mixing_time_with(chain: &LumpedChain, epsilon: f64, opts: &TvOptions) -> Result<MixingTime> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let pi = chain.pi();
    if chain.len() > opts.dense_threshold {
        return heuristic_mixing_time(chain, &pi, epsilon, opts);
    }
    let p = chain.matrix.to_dense();
    let mut powers = vec![p];
    let mut d = worst_tv(&powers[0], &pi);
    if d <= epsilon {
        return Ok(MixingTime { epsilon, t: 1, lower_bound: false, heuristic: false, distance: d });
    }
    loop {
        let k = powers.len() as u32;
        if k > opts.max_doublings {
            return Ok(MixingTime {
                epsilon,
                t: 1u64 << opts.max_doublings,
                lower_bound: true,
                heuristic: false,
                distance: d,
            });
        }
        let last = powers.last().expect("non-empty");
        let next = last * last;
        let dn = worst_tv(&next, &pi);
        powers.push(next);
        if dn <= epsilon {
            break;
        }
        d = dn;
    }
    // d(2^{K-1}) > ε ≥ d(2^K): lift from t = 2^{K-1}.
    let top = powers.len() - 1;
    let mut t: u64 = 1 << (top - 1);
    let mut cur = powers[top - 1].clone();
    for j in (0..top - 1).rev() {
        let cand = &cur * &powers[j];
        let cd = worst_tv(&cand, &pi);
        if cd > epsilon {
            cur = cand;
            t += 1 << j;
        }
    }
    let fin = &cur * &powers[0];
    Ok(MixingTime { epsilon, t: t + 1, lower_bound: false, heuristic: false, distance: worst_tv(&fin, &pi) })
}

fn heuristic_mixing_time(chain: &LumpedChain, pi: &[f64], epsilon: f64, opts: &TvOptions) -> Result<MixingTime> {
    let n = chain.len();
    let coords: Vec<i64> = chain.states.iter().map(|s| s.coordinate()).collect();
    let (lo, hi) = (*coords.iter().min().expect("non-empty"), *coords.iter().max().expect("non-empty"));
    let argmax_where = |f: &dyn Fn(usize) -> bool| (0..n).filter(|&i| f(i)).max_by(|&a, &b| pi[a].total_cmp(&pi[b]));
    let mut starts: Vec<usize> =
        [argmax_where(&|_| true), argmax_where(&|i| coords[i] == lo), argmax_where(&|i| coords[i] == hi)]
            .into_iter()
            .flatten()
            .collect();
    starts.sort_unstable();
    starts.dedup();
    let mut dists: Vec<Vec<f64>> = starts
        .iter()
        .map(|&s| {
            let mut v = vec![0.0; n];
            v[s] = 1.0;
            v
        })
        .collect();
    let mut buf = vec![0.0; n];
    let mut d = 1.0;
    for t in 1..=opts.heuristic_steps {
        d = 0.0f64;
        for v in dists.iter_mut() {
            chain.matrix.left_mul_vec(v, &mut buf);
            std::mem::swap(v, &mut buf);
            d = d.max(0.5 * v.iter().zip(pi).map(|(a, b)| (a - b).abs()).sum::<f64>());
        }
        if d <= epsilon {
            return Ok(MixingTime { epsilon, t, lower_bound: false, heuristic: true, distance: d });
        }
    }
    Ok(MixingTime { epsilon, t: opts.heuristic_steps, lower_bound: true, heuristic: true, distance: d })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingBounds {
    pub lower: f64,
    pub upper: f64,
    /// Set when the bound is vacuous (zero gap or conductance).
    pub unbounded: bool,
    pub formula: String,
}

/// `(1/Gap − 1) ln(1/2ε) ≤ τ(ε) ≤ (1/Gap) ln(1/(π* ε))`.
pub fn gap_mixing_bounds(gap: f64, pi_min: f64, epsilon: f64) -> Result<MixingBounds> {
    check_common(pi_min, epsilon)?;
    let formula = "(1/gap - 1) ln(1/(2 eps)) <= tau(eps) <= (1/gap) ln(1/(pi_min eps))".to_string();
    if gap <= 0.0 {
        return Ok(MixingBounds { lower: f64::INFINITY, upper: f64::INFINITY, unbounded: true, formula });
    }
    if gap > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter(format!("gap {gap} exceeds 1")));
    }
    let lower = (1.0 / gap - 1.0) * (1.0 / (2.0 * epsilon)).ln();
    let upper = (1.0 / gap) * (1.0 / (pi_min * epsilon)).ln();
    Ok(MixingBounds { lower: lower.max(0.0), upper, unbounded: false, formula })
}

/// `(1 − 2Φ)/(2Φ) ln(1/2ε) ≤ τ(ε) ≤ (1/Φ²)(ln(1/2ε) + ½ ln((1−π*)/π*))`.
///
/// The lower bound is the instrument for certifying slow mixing from a
/// small cut.
pub fn conductance_mixing_bounds(phi: f64, pi_min: f64, epsilon: f64) -> Result<MixingBounds> {
    check_common(pi_min, epsilon)?;
    let formula =
        "(1 - 2 phi)/(2 phi) ln(1/(2 eps)) <= tau(eps) <= (1/phi^2)(ln(1/(2 eps)) + 0.5 ln((1 - pi_min)/pi_min))"
            .to_string();
    if phi <= 0.0 {
        return Ok(MixingBounds { lower: f64::INFINITY, upper: f64::INFINITY, unbounded: true, formula });
    }
    if phi > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter(format!("conductance {phi} exceeds 1")));
    }
    let l = (1.0 / (2.0 * epsilon)).ln();
    let lower = (1.0 - 2.0 * phi) / (2.0 * phi) * l;
    let upper = (l + 0.5 * ((1.0 - pi_min) / pi_min).ln()) / (phi * phi);
    Ok(MixingBounds { lower: lower.max(0.0), upper, unbounded: false, formula })
}

/// Lower bound from the log of a tiny conductance, for cuts whose `Φ`
/// underflows: `ln τ ≥ ln((1 − 2Φ)/2 · ln(1/2ε)) − ln Φ`.
pub fn log_conductance_lower_bound(log_phi: f64, epsilon: f64) -> f64 {
    let phi = log_phi.exp();
    ((1.0 - 2.0 * phi).max(0.0) / 2.0 * (1.0 / (2.0 * epsilon)).ln()).ln() - log_phi
}

fn check_common(pi_min: f64, epsilon: f64) -> Result<()> {
    if !(pi_min > 0.0 && pi_min < 1.0) {
        return Err(Error::InvalidParameter(format!("pi_min must lie in (0, 1), got {pi_min}")));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
    }
    Ok(())
}
