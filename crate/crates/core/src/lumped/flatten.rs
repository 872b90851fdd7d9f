//! The balanced-minority line `ℓ_GB`, its bottleneck `λ_min`, and the
//! flattened measure that removes the disordered mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{gb_line_point, log_multinomial_counts, require_divisible, PottsModel, Restriction, Sigma};
use crate::numeric::log_sum_exp;

use super::builders::level_chain_from_space;
use super::space::{potts_points, LevelSpace};
use super::trace::valley;
use super::{ChainMeta, LumpedChain, DEFAULT_CHAIN_CAP};

/// Bottleneck and ordered-mode positions along `(t, ⌈(n-t)/2⌉, ⌊(n-t)/2⌋)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaMin {
    /// `σ_1` of the lowest point between the disordered and ordered modes.
    pub t_min: u32,
    /// `σ_1` of the ordered-mode maximum beyond `t_min`.
    pub t_max: u32,
    /// `(t, class log-weight)` for `t = n/3, n/3 + 2, …, n`.
    pub profile: Vec<(u32, f64)>,
}

impl LambdaMin {
    pub fn lambda_min(&self, n: u32) -> f64 {
        self.t_min as f64 / n as f64
    }

    pub fn point(&self, n: u32) -> Sigma {
        gb_line_point(n, self.t_min)
    }
}

fn target_class_weight(model: &PottsModel, counts: &[u32]) -> f64 {
    let bar: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    let field: f64 = counts.iter().zip(&model.fields).map(|(&c, h)| c as f64 * h).sum();
    log_multinomial_counts(counts) + model.bar_beta() * bar + model.beta * field
}

/// Scans the class log-weight at the model's `β` along `ℓ_GB`.
///
/// Only points with `σ_2 = σ_3` exactly (`n - t` even) are scanned; the
/// intermediate `(t, c, c-1)` classes sit slightly off the line and make the
/// profile zig-zag, which would register as spurious local minima.
pub fn find_lambda_min(model: &PottsModel) -> Result<LambdaMin> {
    if model.q != 3 {
        return Err(Error::Unsupported("the balanced-minority line needs q = 3".into()));
    }
    require_divisible(model.n, 12)?;
    let n = model.n;
    let profile: Vec<(u32, f64)> =
        (n / 3..=n).step_by(2).map(|t| (t, target_class_weight(model, gb_line_point(n, t).counts()))).collect();
    let values: Vec<f64> = profile.iter().map(|p| p.1).collect();
    let k = valley(&values).ok_or_else(|| {
        let mu = model.beta * n as f64;
        Error::Window(format!(
            "the profile along the balanced-minority line has no interior minimum at mu = {mu:.6} (n = {n})"
        ))
    })?;
    let mut best = k + 1;
    for j in k + 1..values.len() {
        if values[j] > values[best] {
            best = j;
        }
    }
    Ok(LambdaMin { t_min: profile[k].0, t_max: profile[best].0, profile })
}

/// RGB classes, their flattened log-weights, and membership in the lifted
/// set `K = {σ_1 < t_min, π(Ω_σ) ≥ π(Ω_λmin)}`.
pub fn flattened_class_weights(model: &PottsModel) -> Result<(Vec<Sigma>, Vec<f64>, Vec<bool>)> {
    let lam = find_lambda_min(model)?;
    let floor = target_class_weight(model, lam.point(model.n).counts());
    let points = potts_points(model.n, 3, Restriction::Rgb, DEFAULT_CHAIN_CAP)?;
    let mut weights = Vec::with_capacity(points.len());
    let mut in_k = Vec::with_capacity(points.len());
    for s in &points {
        let w = target_class_weight(model, s.counts());
        let lifted = s.counts()[0] < lam.t_min && w >= floor;
        in_k.push(lifted);
        weights.push(if lifted { floor } else { w });
    }
    Ok((points, weights, in_k))
}

/// Metropolis chain on `Ω_RGB` targeting the flattened measure.
pub fn build_flattened_level_chain(model: &PottsModel) -> Result<LumpedChain> {
    let (points, weights, in_k) = flattened_class_weights(model)?;
    let log_z = log_sum_exp(&weights);
    let lifted = in_k.iter().filter(|b| **b).count();
    let space = LevelSpace::potts_from_weights(model.n, 3, Restriction::Rgb, points, vec![weights], vec![log_z]);
    let meta = ChainMeta::new("flattened-level")
        .with("q", 3)
        .with("n", model.n)
        .with("beta", model.beta)
        .with("restriction", "rgb")
        .with("lifted_classes", lifted);
    Ok(level_chain_from_space(&space, 0, meta))
}

/// Size at which the asymptotic bottleneck fraction is read off.
pub const LAMBDA_REFERENCE_N: u32 = 12_000;

/// `λ_min` fraction at `n = LAMBDA_REFERENCE_N` for `β = μ/n`.
pub fn reference_lambda_min(mu: f64) -> Result<f64> {
    let n = LAMBDA_REFERENCE_N;
    Ok(find_lambda_min(&PottsModel::from_mu(3, n, mu)?)?.lambda_min(n))
}

/// Bottleneck `σ_1` at size `n`: the exact valley when the finite-`n`
/// profile has one, otherwise `round(λ_ref n)` from the reference size.
/// The flag is set when the fallback was used.
pub fn bottleneck_index(n: u32, mu: f64) -> Result<(u32, bool)> {
    match find_lambda_min(&PottsModel::from_mu(3, n, mu)?) {
        Ok(lm) => Ok((lm.t_min, false)),
        Err(Error::Window(_)) => Ok(((reference_lambda_min(mu)? * n as f64).round() as u32, true)),
        Err(e) => Err(e),
    }
}
