//! Exact transition matrices on lumped state spaces.
//!
//! Every builder returns a [`LumpedChain`]: explicit state labels, a sparse
//! row-stochastic matrix whose diagonal carries all holding mass (same-color
//! proposals, Metropolis rejections, out-of-range level proposals and moves
//! that would leave a restricted sector), and unnormalized stationary
//! log-weights.

mod builders;
mod flatten;
mod space;
pub mod sparse;
mod trace;

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Sigma;
use crate::numeric::log_sum_exp;

pub use builders::{
    build_exp_level_chain, build_exp_swap_chain, build_level_chain, build_swap_chain, build_swap_chain_with,
    build_tempering_chain, swap_acceptance, SwapOptions,
};
pub use flatten::{
    bottleneck_index, build_flattened_level_chain, find_lambda_min, flattened_class_weights, reference_lambda_min,
    LambdaMin, LAMBDA_REFERENCE_N,
};
pub use sparse::CsrMatrix;
pub use trace::{build_trace_projection, trace_threshold, TraceSpec};

pub use crate::models::Restriction;

/// Largest chain the builders will materialize.
pub const DEFAULT_CHAIN_CAP: usize = 2_000_000;

/// Descriptor of one state of a lumped chain.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StateLabel {
    Class { sigma: Sigma },
    Tempered { sigma: Sigma, level: usize },
    Product { sigmas: Vec<Sigma> },
    Point { x: i64 },
    TemperedPoint { x: i64, level: usize },
    PointProduct { xs: Vec<i64> },
    Trace { bits: Vec<bool> },
    Index { i: usize },
}

impl StateLabel {
    /// First color count (or position) of the state's primary component:
    /// the coordinate threshold cut families act on. Product states use the
    /// top level; trace states count their ones.
    pub fn coordinate(&self) -> i64 {
        match self {
            StateLabel::Class { sigma } | StateLabel::Tempered { sigma, .. } => sigma.counts()[0] as i64,
            StateLabel::Product { sigmas } => sigmas.last().map_or(0, |s| s.counts()[0] as i64),
            StateLabel::Point { x } | StateLabel::TemperedPoint { x, .. } => *x,
            StateLabel::PointProduct { xs } => xs.last().copied().unwrap_or(0),
            StateLabel::Trace { bits } => bits.iter().filter(|b| **b).count() as i64,
            StateLabel::Index { i } => *i as i64,
        }
    }

    /// Largest color count, for class-bearing states.
    pub fn max_count(&self) -> Option<i64> {
        match self {
            StateLabel::Class { sigma } | StateLabel::Tempered { sigma, .. } => {
                sigma.counts().iter().max().map(|&m| m as i64)
            }
            _ => None,
        }
    }

    pub fn sigma(&self) -> Option<&Sigma> {
        match self {
            StateLabel::Class { sigma } | StateLabel::Tempered { sigma, .. } => Some(sigma),
            _ => None,
        }
    }

    pub fn level(&self) -> Option<usize> {
        match self {
            StateLabel::Tempered { level, .. } | StateLabel::TemperedPoint { level, .. } => Some(*level),
            _ => None,
        }
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateLabel::Class { sigma } => write!(f, "{sigma}"),
            StateLabel::Tempered { sigma, level } => write!(f, "{sigma}@{level}"),
            StateLabel::Product { sigmas } => {
                let parts: Vec<String> = sigmas.iter().map(|s| s.to_string()).collect();
                write!(f, "[{}]", parts.join(";"))
            }
            StateLabel::Point { x } => write!(f, "{x}"),
            StateLabel::TemperedPoint { x, level } => write!(f, "{x}@{level}"),
            StateLabel::PointProduct { xs } => {
                let parts: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
                write!(f, "[{}]", parts.join(";"))
            }
            StateLabel::Trace { bits } => {
                for b in bits {
                    write!(f, "{}", if *b { '1' } else { '0' })?;
                }
                Ok(())
            }
            StateLabel::Index { i } => write!(f, "i{i}"),
        }
    }
}

impl fmt::Debug for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub builder: String,
    pub params: Vec<(String, String)>,
}

impl ChainMeta {
    pub fn new(builder: &str) -> Self {
        ChainMeta { builder: builder.to_string(), params: Vec::new() }
    }

    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }
}

/// A finite reversible Markov chain with explicit states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LumpedChain {
    pub states: Vec<StateLabel>,
    pub matrix: CsrMatrix,
    /// Unnormalized stationary log-weight per state.
    pub stationary_log: Vec<f64>,
    pub meta: ChainMeta,
}

pub const ROW_SUM_TOL: f64 = 1e-12;
pub const DETAILED_BALANCE_TOL: f64 = 1e-10;

impl LumpedChain {
    pub fn new(states: Vec<StateLabel>, matrix: CsrMatrix, stationary_log: Vec<f64>, meta: ChainMeta) -> Self {
        LumpedChain { states, matrix, stationary_log, meta }
    }

    /// Chain from a dense matrix with `Index` labels.
    pub fn from_dense(p: &nalgebra::DMatrix<f64>, stationary_log: Vec<f64>, builder: &str) -> Self {
        let states = (0..p.nrows()).map(|i| StateLabel::Index { i }).collect();
        LumpedChain::new(states, CsrMatrix::from_dense(p), stationary_log, ChainMeta::new(builder))
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn log_normalizer(&self) -> f64 {
        log_sum_exp(&self.stationary_log)
    }

    /// Normalized stationary log-probabilities.
    pub fn log_pi(&self) -> Vec<f64> {
        let z = self.log_normalizer();
        self.stationary_log.iter().map(|w| w - z).collect()
    }

    pub fn pi(&self) -> Vec<f64> {
        self.log_pi().into_iter().map(f64::exp).collect()
    }

    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.len()).map(|i| (self.matrix.row(i).map(|e| e.1).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Largest relative violation of `π(x)P(x,y) = π(y)P(y,x)` over stored
    /// entries, measured in the log domain.
    pub fn max_detailed_balance_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.len() {
            for (j, p) in self.matrix.row(i) {
                if i == j || p == 0.0 {
                    continue;
                }
                let back = self.matrix.get(j, i);
                if back <= 0.0 {
                    return f64::INFINITY;
                }
                let lhs = self.stationary_log[i] + p.ln();
                let rhs = self.stationary_log[j] + back.ln();
                worst = worst.max(((lhs - rhs).exp() - 1.0).abs());
            }
        }
        worst
    }

    /// Checks entry range, row sums and detailed balance.
    pub fn validate(&self) -> Result<()> {
        if self.stationary_log.len() != self.len() || self.matrix.dim() != self.len() {
            return Err(Error::InconsistentChain("dimension mismatch".into()));
        }
        for i in 0..self.len() {
            for (j, p) in self.matrix.row(i) {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InconsistentChain(format!("entry ({i},{j}) = {p} outside [0,1]")));
                }
            }
        }
        let rs = self.max_row_sum_error();
        if rs > ROW_SUM_TOL {
            return Err(Error::InconsistentChain(format!("row sum error {rs:e}")));
        }
        let db = self.max_detailed_balance_error();
        if db > DETAILED_BALANCE_TOL {
            return Err(Error::InconsistentChain(format!("detailed balance error {db:e}")));
        }
        Ok(())
    }

    pub fn index_of(&self, label: &StateLabel) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    /// Writes the chain in the sparse triplet text format: a header, one
    /// `state` line per state with its stationary log-weight, then one
    /// `from to probability` line per stored entry.
    pub fn write_triplets(&self, out: &mut impl Write) -> io::Result<()> {
        writeln!(out, "# lumped-chain v1")?;
        writeln!(out, "# builder {}", self.meta.builder)?;
        for (k, v) in &self.meta.params {
            writeln!(out, "# param {k}={v}")?;
        }
        writeln!(out, "# states {} entries {}", self.len(), self.matrix.nnz())?;
        for (i, s) in self.states.iter().enumerate() {
            writeln!(out, "state\t{i}\t{s}\t{:.16e}", self.stationary_log[i])?;
        }
        for i in 0..self.len() {
            for (j, p) in self.matrix.row(i) {
                writeln!(out, "{}\t{}\t{:.16e}", self.states[i], self.states[j], p)?;
            }
        }
        Ok(())
    }
}

/// A set of states used as a cut, tagged with the family it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutSet {
    pub members: Vec<bool>,
    pub family: String,
}

impl CutSet {
    pub fn new(members: Vec<bool>, family: impl Into<String>) -> Result<Self> {
        let k = members.iter().filter(|m| **m).count();
        if k == 0 || k == members.len() {
            return Err(Error::InvalidCut(format!("cut must be a non-empty proper subset ({k} of {})", members.len())));
        }
        Ok(CutSet { members, family: family.into() })
    }

    /// Members selected by a predicate on the state labels.
    pub fn from_predicate(
        chain: &LumpedChain,
        family: impl Into<String>,
        f: impl Fn(&StateLabel) -> bool,
    ) -> Result<Self> {
        Self::new(chain.states.iter().map(f).collect(), family)
    }

    /// `{ all σ_m ≤ n/2 }` on class-bearing chains.
    pub fn no_majority(chain: &LumpedChain, n: u32) -> Result<Self> {
        Self::from_predicate(chain, format!("max_count<={}", n / 2), |s| {
            s.max_count().is_some_and(|m| 2 * m <= n as i64)
        })
    }

    /// `{ coordinate < t }`.
    pub fn coordinate_below(chain: &LumpedChain, t: i64) -> Result<Self> {
        Self::from_predicate(chain, format!("coordinate<{t}"), |s| s.coordinate() < t)
    }

    pub fn complement(&self) -> CutSet {
        CutSet { members: self.members.iter().map(|m| !m).collect(), family: format!("not({})", self.family) }
    }

    pub fn size(&self) -> usize {
        self.members.iter().filter(|m| **m).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn validate_catches_broken_chains() {
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let c = LumpedChain::from_dense(&p, vec![0.0, 0.0], "two");
        c.validate().unwrap();

        let c = LumpedChain::from_dense(&p, vec![0.0, 1.0], "unbalanced");
        assert!(matches!(c.validate(), Err(Error::InconsistentChain(_))));

        let p = DMatrix::from_row_slice(2, 2, &[0.6, 0.5, 0.5, 0.5]);
        let c = LumpedChain::from_dense(&p, vec![0.0, 0.0], "rows");
        assert!(c.validate().is_err());

        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        let c = LumpedChain::from_dense(&p, vec![0.0, 0.0], "one-way");
        assert!(c.validate().is_err());
    }

    #[test]
    fn cuts_must_be_proper() {
        assert!(CutSet::new(vec![true, true], "all").is_err());
        assert!(CutSet::new(vec![false, false], "none").is_err());
        let c = CutSet::new(vec![true, false], "first").unwrap();
        assert_eq!(c.complement().members, vec![false, true]);
    }

    #[test]
    fn triplet_dump_lists_every_entry() {
        let p = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
        let c = LumpedChain::from_dense(&p, vec![0.0, 0.0], "two");
        let mut buf = Vec::new();
        c.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# lumped-chain v1\n# builder two\n"));
        assert_eq!(text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("state")).count(), 4);
        assert!(text.contains("i0\ti1\t2.5000000000000000e-1"));
    }
}
