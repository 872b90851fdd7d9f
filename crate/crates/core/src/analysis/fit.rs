//! Least-squares decay fits across parameter grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FitKind {
    /// `ln y = a + b x`.
    ExpInN,
    /// `ln y = a + b ln x`.
    PolyInN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub kind: FitKind,
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual in `ln y`.
    pub max_residual: f64,
    pub grid: Vec<(f64, f64)>,
}

pub fn fit_decay(points: &[(f64, f64)], kind: FitKind) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("a decay fit needs at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|p| p.1.is_nan() || p.1 <= 0.0 || !p.1.is_finite()) {
        return Err(Error::Degenerate("decay fits need positive finite y values".into()));
    }
    if kind == FitKind::PolyInN && points.iter().any(|p| p.0.is_nan() || p.0 <= 0.0) {
        return Err(Error::Degenerate("polynomial fits need positive x values".into()));
    }
    let xs: Vec<f64> = points
        .iter()
        .map(|p| match kind {
            FitKind::ExpInN => p.0,
            FitKind::PolyInN => p.0.ln(),
        })
        .collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 1e-300 * k {
        return Err(Error::Degenerate("all x values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).abs()).fold(0.0, f64::max);
    Ok(ScalingFit { kind, slope, intercept, max_residual, grid: points.to_vec() })
}
