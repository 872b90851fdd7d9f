//! Model families, tempering ladders and exact log-weight arithmetic on the
//! color-count (lumped) state space.
//!
//! On the complete graph the Potts energy of a configuration only depends on
//! its color counts `σ = (σ_1, …, σ_q)`, so every quantity here is a function
//! of [`Sigma`]. Weights are kept in the log domain throughout: at the sizes
//! needed for scaling fits, class weights span hundreds of orders of
//! magnitude.
//!
//! The inverse temperature is stored as `β` and the energy is evaluated in the
//! squared-count form `β̄ Σ σ_m²` with `β̄ = β/2`. It differs from the
//! pair-count form `β Σ σ_m(σ_m-1)/2` by the constant `β n/2`, which cancels
//! in every normalized quantity.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{binomial, ln_factorial, LogSumExp};

/// Default cap on the number of lumped states a computation may touch.
pub const DEFAULT_STATE_CAP: usize = 10_000_000;

/// Color-count vector of a configuration: `counts[m]` vertices carry color `m`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sigma(Vec<u32>);

impl Sigma {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidParameter(format!("sigma needs q >= 2 colors, got {}", counts.len())));
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::InvalidParameter("sigma must count at least one vertex".into()));
        }
        Ok(Sigma(counts))
    }

    pub(crate) fn from_vec_unchecked(counts: Vec<u32>) -> Self {
        Sigma(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn q(&self) -> usize {
        self.0.len()
    }

    pub fn n(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `σ_1 ≥ σ_2 ≥ … ≥ σ_q`, the color-ordered sector.
    pub fn is_sorted_desc(&self) -> bool {
        self.0.windows(2).all(|w| w[0] >= w[1])
    }

    /// Counts after one vertex of color `from` is recolored `to`.
    pub fn recolor(&self, from: usize, to: usize) -> Option<Sigma> {
        if from == to || self.0[from] == 0 {
            return None;
        }
        let mut c = self.0.clone();
        c[from] -= 1;
        c[to] += 1;
        Some(Sigma(c))
    }
}

impl fmt::Debug for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Number of compositions of `n` into `q` ordered non-negative parts.
pub fn sigma_count(n: u32, q: usize) -> f64 {
    binomial(n as u64 + q as u64 - 1, q as u64 - 1)
}

/// All compositions of `n` into `q` parts, lexicographically descending:
/// `(n,0,…,0)` first and `(0,…,0,n)` last.
pub fn enumerate_sigma(n: u32, q: usize) -> Result<Vec<Sigma>> {
    enumerate_sigma_capped(n, q, DEFAULT_STATE_CAP)
}

pub fn enumerate_sigma_capped(n: u32, q: usize, cap: usize) -> Result<Vec<Sigma>> {
    if n == 0 || q < 2 {
        return Err(Error::InvalidParameter(format!("enumerate_sigma needs n >= 1 and q >= 2 (n={n}, q={q})")));
    }
    let count = sigma_count(n, q);
    if count > cap as f64 {
        return Err(Error::StateCap { count, cap, hint: "lower n or raise the cap" });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut cur = vec![0u32; q];
    fill_compositions(n, 0, &mut cur, &mut |c| out.push(Sigma(c.to_vec())));
    Ok(out)
}

fn fill_compositions(remaining: u32, pos: usize, cur: &mut [u32], visit: &mut impl FnMut(&[u32])) {
    if pos == cur.len() - 1 {
        cur[pos] = remaining;
        visit(cur);
        return;
    }
    for v in (0..=remaining).rev() {
        cur[pos] = v;
        fill_compositions(remaining - v, pos + 1, cur, visit);
    }
}

/// Visits every non-increasing composition `σ_1 ≥ … ≥ σ_q` of `n`.
pub(crate) fn for_each_sorted_sigma(n: u32, q: usize, visit: &mut impl FnMut(&[u32])) {
    fn rec(remaining: u32, bound: u32, pos: usize, cur: &mut [u32], visit: &mut impl FnMut(&[u32])) {
        let slots = (cur.len() - pos) as u32;
        if pos == cur.len() - 1 {
            if remaining <= bound {
                cur[pos] = remaining;
                visit(cur);
            }
            return;
        }
        // Need remaining <= bound * slots and the current part >= the average.
        let hi = remaining.min(bound);
        let lo = remaining.div_ceil(slots);
        for v in (lo..=hi).rev() {
            cur[pos] = v;
            rec(remaining - v, v, pos + 1, cur, visit);
        }
    }
    let mut cur = vec![0u32; q];
    rec(n, n, 0, &mut cur, visit);
}

/// Number of distinct color permutations of a sorted count vector.
fn permutation_multiplicity(sorted: &[u32]) -> f64 {
    let mut ln = ln_factorial(sorted.len() as u64);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        ln -= ln_factorial((j - i) as u64);
        i = j;
    }
    ln.exp().round()
}

/// `ln( n! / Π σ_m! )`.
pub fn log_multinomial(sigma: &Sigma) -> f64 {
    log_multinomial_counts(sigma.counts())
}

pub(crate) fn log_multinomial_counts(counts: &[u32]) -> f64 {
    let n: u64 = counts.iter().map(|&c| c as u64).sum();
    counts.iter().fold(ln_factorial(n), |acc, &c| acc - ln_factorial(c as u64))
}

/// Monochromatic pairs plus the field term: `Σ σ_m(σ_m-1)/2 + Σ h_m σ_m`.
pub fn pair_hamiltonian(sigma: &Sigma, fields: &[f64]) -> f64 {
    let pairs: f64 = sigma.counts().iter().map(|&c| (c as f64) * (c as f64 - 1.0) / 2.0).sum();
    pairs + field_term(sigma.counts(), fields)
}

/// `Σ σ_m²`.
pub fn bar_hamiltonian(sigma: &Sigma) -> f64 {
    bar_hamiltonian_counts(sigma.counts())
}

fn bar_hamiltonian_counts(counts: &[u32]) -> f64 {
    counts.iter().map(|&c| (c as f64) * (c as f64)).sum()
}

fn field_term(counts: &[u32], fields: &[f64]) -> f64 {
    counts.iter().zip(fields).map(|(&c, &h)| c as f64 * h).sum()
}

/// Ferromagnetic mean-field Potts model on `n` vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PottsModel {
    pub q: usize,
    pub n: u32,
    pub beta: f64,
    pub fields: Vec<f64>,
    /// Set when the model was built as `β = μ/n`.
    pub mu: Option<f64>,
}

impl PottsModel {
    pub fn new(q: usize, n: u32, beta: f64) -> Result<Self> {
        Self::with_fields(q, n, beta, vec![0.0; q])
    }

    pub fn with_fields(q: usize, n: u32, beta: f64, fields: Vec<f64>) -> Result<Self> {
        let m = PottsModel { q, n, beta, fields, mu: None };
        m.validate()?;
        Ok(m)
    }

    pub fn from_mu(q: usize, n: u32, mu: f64) -> Result<Self> {
        let mut m = Self::new(q, n, mu / n.max(1) as f64)?;
        m.mu = Some(mu);
        Ok(m)
    }

    /// Ising model: color 0 is the `+1` spin and carries the field `h`.
    pub fn ising(n: u32, beta: f64, h: f64) -> Result<Self> {
        Self::with_fields(2, n, beta, vec![h, 0.0])
    }

    pub fn bar_beta(&self) -> f64 {
        self.beta / 2.0
    }

    pub fn has_uniform_fields(&self) -> bool {
        self.fields.iter().all(|&h| h == self.fields[0])
    }

    fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::InvalidParameter(format!("q must be >= 2, got {}", self.q)));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be >= 1".into()));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.fields.len() != self.q {
            return Err(Error::InvalidParameter(format!(
                "expected {} field values, got {}",
                self.q,
                self.fields.len()
            )));
        }
        if self.fields.iter().any(|h| !h.is_finite()) {
            return Err(Error::InvalidParameter("fields must be finite".into()));
        }
        Ok(())
    }
}

/// `π(x) ∝ C^{|x|}` on the integers `[-N, N']`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpModel {
    pub c: f64,
    pub n_neg: u32,
    pub n_pos: u32,
}

impl ExpModel {
    pub fn new(c: f64, n_neg: u32, n_pos: u32) -> Result<Self> {
        if !(c.is_finite() && c > 1.0) {
            return Err(Error::InvalidParameter(format!("C must be > 1, got {c}")));
        }
        if n_neg == 0 || n_pos == 0 {
            return Err(Error::InvalidParameter("N and N' must be positive".into()));
        }
        Ok(ExpModel { c, n_neg, n_pos })
    }

    pub fn lo(&self) -> i64 {
        -(self.n_neg as i64)
    }

    pub fn hi(&self) -> i64 {
        self.n_pos as i64
    }

    pub fn points(&self) -> impl Iterator<Item = i64> {
        self.lo()..=self.hi()
    }
}

/// `e · |x| · ln C`, the unnormalized log weight of `x` at exponent `e`.
pub fn exp_log_weight(model: &ExpModel, exponent: f64, x: i64) -> Result<f64> {
    if x < model.lo() || x > model.hi() {
        return Err(Error::PointOutOfRange { x, lo: model.lo(), hi: model.hi() });
    }
    if !(0.0..=1.0).contains(&exponent) {
        return Err(Error::InvalidParameter(format!("exponent {exponent} outside [0, 1]")));
    }
    Ok(exponent * x.unsigned_abs() as f64 * model.c.ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Model {
    Potts(PottsModel),
    Exp(ExpModel),
}

impl From<PottsModel> for Model {
    fn from(m: PottsModel) -> Self {
        Model::Potts(m)
    }
}

impl From<ExpModel> for Model {
    fn from(m: ExpModel) -> Self {
        Model::Exp(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LadderKind {
    /// Gibbs measures at `β_i = e_i β`.
    Tempered,
    /// Entropy-dampened measures: class masses `∝ ρ_M(Ω_σ)^{e_i}`.
    Dampened,
}

/// Which part of the Potts state space a chain lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Restriction {
    #[default]
    None,
    /// `σ_1 ≥ σ_2 ≥ σ_3` (3-state Potts only).
    Rgb,
}

impl Restriction {
    pub fn admits(&self, sigma: &Sigma) -> bool {
        match self {
            Restriction::None => true,
            Restriction::Rgb => sigma.is_sorted_desc(),
        }
    }
}

/// Indexed family of `M+1` distributions with exact log partition functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    pub model: Model,
    pub kind: LadderKind,
    pub exponents: Vec<f64>,
    pub log_partitions: Vec<f64>,
    /// Log partition functions over `σ_1 ≥ σ_2 ≥ σ_3`, for `q = 3`.
    pub rgb_log_partitions: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct LadderOptions {
    pub state_cap: usize,
}

impl Default for LadderOptions {
    fn default() -> Self {
        LadderOptions { state_cap: DEFAULT_STATE_CAP }
    }
}

/// `i/M` for `i = 0..=M`; a single level sits at the target (`[1]`).
pub fn default_exponents(m: usize) -> Vec<f64> {
    if m == 0 {
        return vec![1.0];
    }
    (0..=m).map(|i| i as f64 / m as f64).collect()
}

pub fn make_ladder(model: impl Into<Model>, m: usize, kind: LadderKind, exponents: Option<Vec<f64>>) -> Result<Ladder> {
    make_ladder_with(model, m, kind, exponents, LadderOptions::default())
}

pub fn make_ladder_with(
    model: impl Into<Model>,
    m: usize,
    kind: LadderKind,
    exponents: Option<Vec<f64>>,
    opts: LadderOptions,
) -> Result<Ladder> {
    let model = model.into();
    let exponents = match exponents {
        Some(e) => {
            validate_exponents(&e, m)?;
            e
        }
        None => default_exponents(m),
    };
    let mut ladder = Ladder { model, kind, exponents, log_partitions: Vec::new(), rgb_log_partitions: None };
    match &ladder.model {
        Model::Exp(_) if kind == LadderKind::Dampened => {
            return Err(Error::Unsupported(
                "the dampened family needs a count structure; use a Potts/Ising model".into(),
            ));
        }
        Model::Exp(em) => {
            if em.n_neg as f64 + em.n_pos as f64 + 1.0 > opts.state_cap as f64 {
                return Err(Error::StateCap {
                    count: em.n_neg as f64 + em.n_pos as f64 + 1.0,
                    cap: opts.state_cap,
                    hint: "lower N, N'",
                });
            }
            ladder.log_partitions = (0..ladder.levels())
                .map(|i| {
                    let e = ladder.exponents[i];
                    let mut acc = LogSumExp::new();
                    for x in em.points() {
                        acc.push(e * x.unsigned_abs() as f64 * em.c.ln());
                    }
                    acc.value()
                })
                .collect();
        }
        Model::Potts(pm) => {
            let count = sigma_count(pm.n, pm.q);
            if count > opts.state_cap as f64 {
                return Err(Error::StateCap { count, cap: opts.state_cap, hint: "lower n or raise the cap" });
            }
            let sums: Vec<(f64, Option<f64>)> =
                (0..ladder.levels()).into_par_iter().map(|i| ladder.partition_sums(pm, i)).collect();
            ladder.log_partitions = sums.iter().map(|s| s.0).collect();
            if pm.q == 3 {
                ladder.rgb_log_partitions = Some(sums.iter().map(|s| s.1.unwrap_or(f64::NAN)).collect());
            }
        }
    }
    Ok(ladder)
}

fn validate_exponents(e: &[f64], m: usize) -> Result<()> {
    if e.len() != m + 1 {
        return Err(Error::InvalidParameter(format!("expected {} exponents, got {}", m + 1, e.len())));
    }
    if e.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidParameter("exponents must lie in [0, 1]".into()));
    }
    if e.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("exponents must be non-decreasing".into()));
    }
    if m > 0 && (e[0] != 0.0 || e[m] != 1.0) {
        return Err(Error::InvalidParameter("exponent schedule must start at 0 and end at 1".into()));
    }
    if m == 0 && e[0] != 1.0 {
        return Err(Error::InvalidParameter("a single-level ladder sits at exponent 1".into()));
    }
    Ok(())
}

impl Ladder {
    pub fn levels(&self) -> usize {
        self.exponents.len()
    }

    /// Index of the top level (`M`).
    pub fn top(&self) -> usize {
        self.exponents.len() - 1
    }

    pub fn potts(&self) -> Option<&PottsModel> {
        match &self.model {
            Model::Potts(p) => Some(p),
            Model::Exp(_) => None,
        }
    }

    pub fn exp_model(&self) -> Option<&ExpModel> {
        match &self.model {
            Model::Exp(e) => Some(e),
            Model::Potts(_) => None,
        }
    }

    pub(crate) fn require_potts(&self) -> Result<&PottsModel> {
        self.potts().ok_or_else(|| Error::Unsupported("operation needs a Potts/Ising ladder".into()))
    }

    pub(crate) fn require_exp(&self) -> Result<&ExpModel> {
        self.exp_model().ok_or_else(|| Error::Unsupported("operation needs an exponential-family ladder".into()))
    }

    pub fn check_level(&self, level: usize) -> Result<()> {
        if level >= self.levels() {
            Err(Error::LevelOutOfRange { level, max: self.top() })
        } else {
            Ok(())
        }
    }

    /// Inverse temperature of a tempered level, `e_i β`.
    pub fn level_beta(&self, level: usize) -> f64 {
        match &self.model {
            Model::Potts(p) => self.exponents[level] * p.beta,
            Model::Exp(_) => self.exponents[level],
        }
    }

    pub fn log_partition(&self, level: usize, restriction: Restriction) -> Result<f64> {
        self.check_level(level)?;
        match restriction {
            Restriction::None => Ok(self.log_partitions[level]),
            Restriction::Rgb => self
                .rgb_log_partitions
                .as_ref()
                .map(|v| v[level])
                .ok_or_else(|| Error::Unsupported("the RGB restriction is defined for q = 3 only".into())),
        }
    }

    /// Unnormalized log mass of the class `Ω_σ` at a level.
    pub fn log_class_weight(&self, level: usize, sigma: &Sigma) -> Result<f64> {
        self.check_level(level)?;
        let pm = self.require_potts()?;
        if sigma.q() != pm.q || sigma.n() != pm.n {
            return Err(Error::InvalidParameter(format!("sigma {sigma} does not match q={}, n={}", pm.q, pm.n)));
        }
        Ok(self.class_weight_counts(pm, level, sigma.counts()))
    }

    /// Unnormalized log weight of any single configuration in `Ω_σ`.
    pub fn log_config_weight(&self, level: usize, sigma: &Sigma) -> Result<f64> {
        Ok(self.log_class_weight(level, sigma)? - log_multinomial(sigma))
    }

    pub(crate) fn class_weight_counts(&self, pm: &PottsModel, level: usize, counts: &[u32]) -> f64 {
        let e = self.exponents[level];
        let lm = log_multinomial_counts(counts);
        let energy = pm.bar_beta() * bar_hamiltonian_counts(counts) + pm.beta * field_term(counts, &pm.fields);
        match self.kind {
            LadderKind::Tempered => lm + e * energy,
            LadderKind::Dampened => e * (lm + energy),
        }
    }

    /// Unnormalized log weight of the point `x` (exponential family).
    pub fn log_point_weight(&self, level: usize, x: i64) -> Result<f64> {
        self.check_level(level)?;
        exp_log_weight(self.require_exp()?, self.exponents[level], x)
    }

    /// Normalized class masses at a level, in [`enumerate_sigma`] order.
    pub fn class_distribution(&self, level: usize) -> Result<Vec<f64>> {
        self.class_distribution_restricted(level, Restriction::None).map(|(_, p)| p)
    }

    /// Classes admitted by `restriction` and their normalized masses.
    pub fn class_distribution_restricted(
        &self,
        level: usize,
        restriction: Restriction,
    ) -> Result<(Vec<Sigma>, Vec<f64>)> {
        let pm = self.require_potts()?;
        let log_z = self.log_partition(level, restriction)?;
        let classes: Vec<Sigma> = enumerate_sigma(pm.n, pm.q)?.into_iter().filter(|s| restriction.admits(s)).collect();
        let probs = classes.iter().map(|s| (self.class_weight_counts(pm, level, s.counts()) - log_z).exp()).collect();
        Ok((classes, probs))
    }

    /// Normalized point masses over `[-N, N']` at a level.
    pub fn point_distribution(&self, level: usize) -> Result<Vec<f64>> {
        let em = self.require_exp()?;
        self.check_level(level)?;
        let log_z = self.log_partitions[level];
        em.points().map(|x| Ok((self.log_point_weight(level, x)? - log_z).exp())).collect()
    }

    /// Full and sorted-sector log partition sums at one level.
    fn partition_sums(&self, pm: &PottsModel, level: usize) -> (f64, Option<f64>) {
        let mut full = LogSumExp::new();
        let mut sorted = LogSumExp::new();
        if pm.has_uniform_fields() {
            // Every permutation of a sorted class has the same weight.
            for_each_sorted_sigma(pm.n, pm.q, &mut |c| {
                let w = self.class_weight_counts(pm, level, c);
                full.push(w + permutation_multiplicity(c).ln());
                sorted.push(w);
            });
        } else {
            let mut cur = vec![0u32; pm.q];
            fill_compositions(pm.n, 0, &mut cur, &mut |c| {
                let w = self.class_weight_counts(pm, level, c);
                full.push(w);
                if c.windows(2).all(|p| p[0] >= p[1]) {
                    sorted.push(w);
                }
            });
        }
        (full.value(), Some(sorted.value()))
    }
}

/// Points on the balanced-minority line `(t, ⌈(n-t)/2⌉, ⌊(n-t)/2⌋)`.
pub fn gb_line_point(n: u32, t: u32) -> Sigma {
    let rest = n - t;
    Sigma(vec![t, rest.div_ceil(2), rest / 2])
}

/// Critical inverse temperature of the 3-state mean-field Potts model,
/// `β_c = 4 ln 2 / n` (so `β̄_c = 2 ln 2 / n`).
pub fn potts_critical_beta(n: u32) -> f64 {
    4.0 * std::f64::consts::LN_2 / n as f64
}

/// Critical inverse temperature of the mean-field Ising model under the
/// pair-count Hamiltonian, `2 / n`.
pub fn ising_critical_beta(n: u32) -> f64 {
    2.0 / n as f64
}

/// Fails unless `n` is a multiple of `divisor`.
pub fn require_divisible(n: u32, divisor: u32) -> Result<()> {
    if !n.is_multiple_of(divisor) {
        Err(Error::Divisibility { n, divisor })
    } else {
        Ok(())
    }
}
