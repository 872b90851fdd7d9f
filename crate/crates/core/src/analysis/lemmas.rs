//! Exact discrete checks of the shape facts behind the 3-state Potts
//! slowdown: unimodality along fixed-`σ_1` lines, the mass balance of the
//! two modes at `β_c`, and the level monotonicity of mode ratios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lumped::{bottleneck_index, find_lambda_min, trace_threshold, LambdaMin};
use crate::models::{
    bar_hamiltonian, ising_critical_beta, log_multinomial, make_ladder, potts_critical_beta, require_divisible, Ladder,
    LadderKind, PottsModel, Restriction, Sigma,
};

const TIE: f64 = 1e-12;

fn sigma3(a: u32, b: u32, c: u32) -> Sigma {
    Sigma::new(vec![a, b, c]).expect("three counts with a positive total")
}

fn require_q3(ladder: &Ladder) -> Result<u32> {
    let pm = ladder.require_potts()?;
    if pm.q != 3 {
        return Err(Error::Unsupported("these checks concern the 3-state Potts model".into()));
    }
    Ok(pm.n)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE * a.abs().max(b.abs()).max(1.0)
}

/// Non-decreasing up to the first maximum, non-increasing after the last.
pub fn is_unimodal(v: &[f64]) -> bool {
    let Some(max) = v.iter().copied().reduce(f64::max) else {
        return true;
    };
    let first = v.iter().position(|&x| close(x, max)).unwrap_or(0);
    let last = v.iter().rposition(|&x| close(x, max)).unwrap_or(0);
    let rising = v[..=first].windows(2).all(|w| w[1] >= w[0] || close(w[0], w[1]));
    let flat = v[first..=last].iter().all(|&x| close(x, max));
    let falling = v[last..].windows(2).all(|w| w[1] <= w[0] || close(w[0], w[1]));
    rising && flat && falling
}

pub fn is_non_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] >= w[0] || close(w[0], w[1]))
}

/// Outcome of an argmax scan along `σ_1 = t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineScan {
    pub level: usize,
    pub t: u32,
    /// `σ_3` values attaining the maximum.
    pub argmax: Vec<u32>,
    /// The balanced split(s) `⌊(n-t)/2⌋, ⌈(n-t)/2⌉`.
    pub expected: Vec<u32>,
    pub unimodal: bool,
    pub pass: bool,
}

/// Class log-weights of `(t, n-t-x, x)` for `x = 0..=n-t`.
pub fn line_profile(ladder: &Ladder, level: usize, t: u32) -> Result<Vec<f64>> {
    let n = require_q3(ladder)?;
    if t > n {
        return Err(Error::InvalidParameter(format!("t = {t} exceeds n = {n}")));
    }
    (0..=n - t).map(|x| ladder.log_class_weight(level, &sigma3(t, n - t - x, x))).collect()
}

pub fn scan_line(ladder: &Ladder, level: usize, t: u32) -> Result<LineScan> {
    let n = require_q3(ladder)?;
    let v = line_profile(ladder, level, t)?;
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let argmax: Vec<u32> = (0..v.len() as u32).filter(|&x| close(v[x as usize], max)).collect();
    let rest = n - t;
    let mut expected = vec![rest / 2];
    if rest % 2 == 1 {
        expected.push(rest / 2 + 1);
    }
    let unimodal = is_unimodal(&v);
    let pass = unimodal && argmax == expected;
    Ok(LineScan { level, t, argmax, expected, unimodal, pass })
}

/// Scans `σ_1 = n/2` at every level with `β_i ≤ β_c`; each maximum should
/// sit at `σ_2 = σ_3 = n/4`.
pub fn half_line_scans(ladder: &Ladder) -> Result<Vec<LineScan>> {
    let n = require_q3(ladder)?;
    require_divisible(n, 12)?;
    let bc = potts_critical_beta(n) * (1.0 + 1e-12);
    (0..ladder.levels()).filter(|&i| ladder.level_beta(i) <= bc).map(|i| scan_line(ladder, i, n / 2)).collect()
}

/// Scans `σ_1 = t` at every level above the bottom one (the only level
/// for a single-level ladder); the maximum should be the midpoint split.
pub fn minority_line_scans(ladder: &Ladder, t: u32) -> Result<Vec<LineScan>> {
    let first = if ladder.levels() > 1 { 1 } else { 0 };
    (first..ladder.levels()).map(|i| scan_line(ladder, i, t)).collect()
}

/// Shape of the class log-weight along the balanced-minority line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorityLineShape {
    pub t_min: u32,
    pub t_max: u32,
    /// Non-increasing from `n/3` down into the valley.
    pub falls_to_valley: bool,
    /// Unimodal from the valley to `n` with its single peak at `t_max`.
    pub ordered_peak_unimodal: bool,
    pub pass: bool,
}

pub fn minority_line_shape(lm: &LambdaMin) -> MinorityLineShape {
    let k = lm.profile.iter().position(|p| p.0 == lm.t_min).unwrap_or(0);
    let v: Vec<f64> = lm.profile.iter().map(|p| p.1).collect();
    let falls = v[..=k].windows(2).all(|w| w[1] <= w[0] || close(w[0], w[1]));
    let tail = &v[k..];
    let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let peaks = tail.iter().filter(|&&x| close(x, max)).count();
    let at = lm.profile[k + tail.iter().position(|&x| close(x, max)).unwrap_or(0)].0;
    let peak = is_unimodal(tail) && peaks == 1 && at == lm.t_max;
    MinorityLineShape {
        t_min: lm.t_min,
        t_max: lm.t_max,
        falls_to_valley: falls,
        ordered_peak_unimodal: peak,
        pass: falls && peak,
    }
}

/// `ln w(σ) = ln multinomial(σ) + β̄ Σσ_m²` for the field-free model.
pub fn plain_log_class_weight(sigma: &Sigma, beta_bar: f64) -> f64 {
    log_multinomial(sigma) + beta_bar * bar_hamiltonian(sigma)
}

/// `ln π_β(Ω_{n/2}) / π_β(Ω_{n/3})` for the classes `(n/2, n/4, n/4)` and
/// `(n/3, n/3, n/3)`. No partition function is needed, so `n` can be large.
pub fn mode_log_ratio(n: u32, beta: f64) -> Result<f64> {
    require_divisible(n, 12)?;
    let bb = beta / 2.0;
    Ok(plain_log_class_weight(&sigma3(n / 2, n / 4, n / 4), bb)
        - plain_log_class_weight(&sigma3(n / 3, n / 3, n / 3), bb))
}

/// Per-vertex slope of the critical mode log-ratio between two sizes.
pub fn mode_ratio_slope(n1: u32, n2: u32) -> Result<f64> {
    if n1 == n2 {
        return Err(Error::InvalidParameter("the two sizes must differ".into()));
    }
    let a = mode_log_ratio(n1, potts_critical_beta(n1))?;
    let b = mode_log_ratio(n2, potts_critical_beta(n2))?;
    Ok((b - a) / (n2 as f64 - n1 as f64))
}

/// `β̄` at which `(2n/3, n/6, n/6)` and `(n/3, n/3, n/3)` carry equal mass.
/// The log-weight difference is affine in `β̄`, so the root is exact.
pub fn balance_beta_bar(n: u32) -> Result<f64> {
    require_divisible(n, 12)?;
    let ordered = sigma3(2 * n / 3, n / 6, n / 6);
    let disordered = sigma3(n / 3, n / 3, n / 3);
    Ok((log_multinomial(&disordered) - log_multinomial(&ordered))
        / (bar_hamiltonian(&ordered) - bar_hamiltonian(&disordered)))
}

/// Normalized log mass of the disordered class `(n/3, n/3, n/3)` per level.
pub fn disordered_log_masses(ladder: &Ladder, restriction: Restriction) -> Result<Vec<f64>> {
    let n = require_q3(ladder)?;
    require_divisible(n, 3)?;
    let s = sigma3(n / 3, n / 3, n / 3);
    (0..ladder.levels()).map(|i| Ok(ladder.log_class_weight(i, &s)? - ladder.log_partition(i, restriction)?)).collect()
}

/// `ln w_i(n/2, n/4, n/4) − ln w_i(n/3, n/3, n/3)` for each level.
pub fn boundary_log_ratios(ladder: &Ladder) -> Result<Vec<f64>> {
    let n = require_q3(ladder)?;
    require_divisible(n, 12)?;
    let (b, d) = (sigma3(n / 2, n / 4, n / 4), sigma3(n / 3, n / 3, n / 3));
    (0..ladder.levels()).map(|i| Ok(ladder.log_class_weight(i, &b)? - ladder.log_class_weight(i, &d)?)).collect()
}

/// Successive-level log ratios of the disordered and bottleneck masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRatios {
    /// `ln π_{i-1}(Ω_{n/3}) − ln π_i(Ω_{n/3})` for `i = 1..=M`.
    pub disordered: Vec<f64>,
    /// The same for the bottleneck class at `σ_1 = t_min`.
    pub bottleneck: Vec<f64>,
}

impl LevelRatios {
    /// Every disordered ratio exceeds one.
    pub fn disordered_grows(&self) -> bool {
        self.disordered.iter().all(|&r| r > 0.0)
    }

    /// Smallest `ln` of the disordered ratio over the bottleneck ratio.
    pub fn min_gap(&self) -> f64 {
        self.disordered.iter().zip(&self.bottleneck).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min)
    }
}

pub fn level_ratios(ladder: &Ladder, t_min: u32, restriction: Restriction) -> Result<LevelRatios> {
    let n = require_q3(ladder)?;
    require_divisible(n, 3)?;
    let d = sigma3(n / 3, n / 3, n / 3);
    let b = crate::models::gb_line_point(n, t_min);
    let mass = |s: &Sigma| -> Result<Vec<f64>> {
        (0..ladder.levels())
            .map(|i| Ok(ladder.log_class_weight(i, s)? - ladder.log_partition(i, restriction)?))
            .collect()
    };
    let (md, mb) = (mass(&d)?, mass(&b)?);
    let diffs = |m: &[f64]| m.windows(2).map(|w| w[0] - w[1]).collect();
    Ok(LevelRatios { disordered: diffs(&md), bottleneck: diffs(&mb) })
}

/// Far end of the slope item in [`lemma_suite`].
pub const SLOPE_REFERENCE_N: u32 = 12_000;

/// Rate of the critical mode log-ratio per vertex, `½ln(8/9) + ln2/12`.
pub fn mode_ratio_rate() -> f64 {
    0.5 * (8.0f64 / 9.0).ln() + std::f64::consts::LN_2 / 12.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Pass,
    Fail,
    /// The checked shape does not exist at this size.
    NotApplicable,
}

impl ItemStatus {
    fn from_bool(ok: bool) -> Self {
        if ok {
            ItemStatus::Pass
        } else {
            ItemStatus::Fail
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ItemStatus::Pass => "PASS",
            ItemStatus::Fail => "FAIL",
            ItemStatus::NotApplicable => "N/A",
        }
    }
}

/// One line of the lemma suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteItem {
    pub item: String,
    pub n: u32,
    pub status: ItemStatus,
    /// Headline number of the item, if it has one.
    pub value: Option<f64>,
    pub detail: String,
}

fn item(name: &str, n: u32, status: ItemStatus, value: Option<f64>, detail: String) -> SuiteItem {
    SuiteItem { item: name.into(), n, status, value, detail }
}

fn failed_at(scans: &[LineScan]) -> String {
    match scans.iter().find(|s| !s.pass) {
        Some(s) => format!("level {} t {}: argmax {:?} expected {:?}", s.level, s.t, s.argmax, s.expected),
        None => format!("{} scans", scans.len()),
    }
}

/// The discrete lemma suite at size `n` (a multiple of 12) for `β* = μ/n`
/// with an `m`-level tempered ladder. Shape failures are data; only
/// invalid parameters are errors.
pub fn lemma_suite(n: u32, mu: f64, m: usize) -> Result<Vec<SuiteItem>> {
    require_divisible(n, 12)?;
    let mut out = Vec::new();
    let nf = n as f64;

    let crit = make_ladder(PottsModel::new(3, n, potts_critical_beta(n))?, m, LadderKind::Tempered, None)?;
    let scans = half_line_scans(&crit)?;
    out.push(item("half_line_argmax", n, ItemStatus::from_bool(scans.iter().all(|s| s.pass)), None, failed_at(&scans)));

    let ratios = boundary_log_ratios(&crit)?;
    out.push(item(
        "boundary_ratio_monotone",
        n,
        ItemStatus::from_bool(is_non_decreasing(&ratios)),
        ratios.last().copied(),
        format!("{} levels", ratios.len()),
    ));

    let bb = balance_beta_bar(n)?;
    let off = bb - 2.0 * std::f64::consts::LN_2 / nf;
    out.push(item(
        "mass_balance_point",
        n,
        ItemStatus::from_bool(off.abs() <= 10.0 / (nf * nf)),
        Some(bb),
        format!("offset from 2ln2/n = {off:.3e}"),
    ));

    let single = make_ladder(PottsModel::new(3, n, potts_critical_beta(n))?, 0, LadderKind::Tempered, None)?;
    let disordered = disordered_log_masses(&single, Restriction::None)?[0];
    out.push(item(
        "disordered_mass_floor",
        n,
        ItemStatus::from_bool(disordered >= -2.0 * nf.ln()),
        Some(disordered.exp()),
        format!("n^-2 = {:.6e}", 1.0 / (nf * nf)),
    ));

    let ratio = mode_log_ratio(n, potts_critical_beta(n))?;
    // The far end is fixed so small n still sees the asymptotic rate.
    let far = if n < SLOPE_REFERENCE_N { SLOPE_REFERENCE_N } else { 10 * n };
    let slope = mode_ratio_slope(n, far)?;
    let rel = (slope / mode_ratio_rate() - 1.0).abs();
    out.push(item("mode_ratio", n, ItemStatus::Pass, Some(ratio.exp()), format!("ln ratio = {ratio:.6}")));
    out.push(item(
        "mode_ratio_slope",
        n,
        ItemStatus::from_bool(rel <= 0.05),
        Some(slope),
        format!("slope over ({n}, {far}); rate {:.6e}, relative error {rel:.3e}", mode_ratio_rate()),
    ));

    let model = PottsModel::from_mu(3, n, mu)?;
    let ladder = make_ladder(model.clone(), m, LadderKind::Tempered, None)?;
    let (t, fallback) = bottleneck_index(n, mu)?;
    let how = if fallback { "reference fraction" } else { "finite-n valley" };
    let scans = minority_line_scans(&ladder, t)?;
    out.push(item(
        "bottleneck_line_argmax",
        n,
        ItemStatus::from_bool(scans.iter().all(|s| s.pass)),
        Some(t as f64),
        format!("t from {how}; {}", failed_at(&scans)),
    ));

    let mut all = Vec::new();
    for u in t..=n {
        all.extend(minority_line_scans(&ladder, u)?);
    }
    out.push(item(
        "ordered_lines_argmax",
        n,
        ItemStatus::from_bool(all.iter().all(|s| s.pass)),
        Some(t as f64),
        format!("t in {t}..={n}; {}", failed_at(&all)),
    ));

    match find_lambda_min(&model) {
        Ok(lm) => {
            let shape = minority_line_shape(&lm);
            out.push(item(
                "balanced_line_shape",
                n,
                ItemStatus::from_bool(shape.pass),
                Some(lm.lambda_min(n)),
                format!("t_min {} t_max {}", lm.t_min, lm.t_max),
            ));
        }
        Err(Error::Window(msg)) => out.push(item("balanced_line_shape", n, ItemStatus::NotApplicable, None, msg)),
        Err(e) => return Err(e),
    }

    let lr = level_ratios(&ladder, t, Restriction::Rgb)?;
    let smallest = lr.disordered.iter().copied().fold(f64::INFINITY, f64::min);
    out.push(item(
        "disordered_mass_grows",
        n,
        ItemStatus::from_bool(lr.disordered_grows()),
        Some(smallest),
        "smallest log ratio of successive levels".into(),
    ));
    let gap = lr.min_gap();
    out.push(item(
        "disordered_outgrows_bottleneck",
        n,
        ItemStatus::from_bool(gap > 0.0),
        Some(gap),
        "smallest log of disordered over bottleneck level ratio".into(),
    ));

    // Field-free Ising at twice the critical coupling: every level of the
    // dampened ladder splits at n/2 by symmetry.
    let ising = make_ladder(PottsModel::ising(n, 2.0 * ising_critical_beta(n), 0.0)?, m, LadderKind::Dampened, None)?;
    let tr = trace_threshold(&ising)?;
    let ok = tr.thresholds.iter().all(|&t| t == n as i64 / 2);
    out.push(item(
        "ising_symmetric_trace",
        n,
        ItemStatus::from_bool(ok),
        tr.thresholds.first().map(|&t| t as f64),
        format!("{} levels", tr.thresholds.len()),
    ));
    Ok(out)
}
