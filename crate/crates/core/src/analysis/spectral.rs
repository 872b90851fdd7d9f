//! Spectral gap of reversible chains.
//!
//! The chain is symmetrized by the similarity `D^{1/2} P D^{-1/2}` with
//! `D = diag(π)` and the work is done on the Laplacian `L = I − S`, whose
//! diagonal is the off-diagonal row mass of `P`. That keeps gaps of slowly
//! mixing chains free of the `1 − P(x,x)` cancellation. The top eigenvector
//! `√π` (eigenvalue 0 of `L`) is deflated.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lumped::{CsrMatrix, LumpedChain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralMethod {
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    pub method: SpectralMethod,
    /// Residual bound `‖L u − θ u‖` required of both extreme Ritz pairs;
    /// it bounds the eigenvalue error.
    pub tol: f64,
    /// Automatic mode solves densely up to this many states.
    pub dense_threshold: usize,
    pub krylov_dim: usize,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            method: SpectralMethod::Auto,
            tol: 1e-10,
            dense_threshold: 1200,
            krylov_dim: 160,
            max_restarts: 60,
            seed: 0x5eed_1a5c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// `1 − |λ_1|`, `λ_1` the eigenvalue of largest modulus below the top.
    pub gap: f64,
    pub lambda1_abs: f64,
    /// Largest eigenvalue below 1 (signed).
    pub lambda_second: f64,
    /// Smallest eigenvalue.
    pub lambda_min: f64,
    pub method: SpectralMethod,
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
    pub states: usize,
}

impl SpectralReport {
    /// `1 − λ_second`, the relaxation gap that ignores negative eigenvalues.
    pub fn relaxation_gap(&self) -> f64 {
        1.0 - self.lambda_second
    }

    fn from_laplacian_extremes(
        mu_lo: f64,
        mu_hi: f64,
        method: SpectralMethod,
        residual: f64,
        iterations: usize,
        states: usize,
    ) -> Self {
        let lambda_second = 1.0 - mu_lo;
        let lambda_min = 1.0 - mu_hi;
        let gap = mu_lo.min(2.0 - mu_hi).clamp(0.0, 1.0);
        SpectralReport {
            gap,
            lambda1_abs: 1.0 - gap,
            lambda_second,
            lambda_min,
            method,
            residual,
            converged: true,
            iterations,
            states,
        }
    }
}

pub fn spectral_gap(chain: &LumpedChain) -> Result<SpectralReport> {
    spectral_gap_with(chain, &SpectralOptions::default())
}

pub fn spectral_gap_with(chain: &LumpedChain, opts: &SpectralOptions) -> Result<SpectralReport> {
    let n = chain.len();
    if n == 0 {
        return Err(Error::Degenerate("empty chain".into()));
    }
    if n == 1 {
        return Ok(SpectralReport::from_laplacian_extremes(1.0, 1.0, SpectralMethod::Dense, 0.0, 0, 1));
    }
    let (lap, v0) = symmetric_laplacian(chain);
    let dense = match opts.method {
        SpectralMethod::Dense => true,
        SpectralMethod::Iterative => false,
        SpectralMethod::Auto => n <= opts.dense_threshold,
    };
    if dense || n <= 3 {
        dense_extremes(&lap, &v0)
    } else {
        lanczos_extremes(&lap, &v0, opts)
    }
}

/// `L = I − D^{1/2} P D^{-1/2}` (explicitly symmetrized) and `√π`.
pub(crate) fn symmetric_laplacian(chain: &LumpedChain) -> (CsrMatrix, Vec<f64>) {
    let lp = chain.log_pi();
    let p = &chain.matrix;
    let lap = p.map_entries(|i, j, v| {
        if i == j {
            p.row(i).filter(|e| e.0 != i).map(|e| e.1).sum()
        } else {
            let fwd = v * (0.5 * (lp[i] - lp[j])).exp();
            let back = p.get(j, i) * (0.5 * (lp[j] - lp[i])).exp();
            -0.5 * (fwd + back)
        }
    });
    let v0 = lp.iter().map(|l| (0.5 * l).exp()).collect();
    (lap, v0)
}

fn dense_extremes(lap: &CsrMatrix, v0: &[f64]) -> Result<SpectralReport> {
    let n = lap.dim();
    let m = lap.to_dense();
    let eig = SymmetricEigen::new(m.clone());
    let v = nalgebra::DVector::from_column_slice(v0);
    let mut top = 0;
    let mut best = -1.0;
    for k in 0..n {
        let overlap = eig.eigenvectors.column(k).dot(&v).abs();
        if overlap > best {
            best = overlap;
            top = k;
        }
    }
    let mut lo = (f64::INFINITY, 0);
    let mut hi = (f64::NEG_INFINITY, 0);
    for k in (0..n).filter(|&k| k != top) {
        let mu = eig.eigenvalues[k];
        if mu < lo.0 {
            lo = (mu, k);
        }
        if mu > hi.0 {
            hi = (mu, k);
        }
    }
    let residual = [lo.1, hi.1]
        .iter()
        .map(|&k| {
            let u = eig.eigenvectors.column(k);
            (&m * u - u * eig.eigenvalues[k]).norm()
        })
        .fold(0.0, f64::max);
    Ok(SpectralReport::from_laplacian_extremes(lo.0.max(0.0), hi.0, SpectralMethod::Dense, residual, 0, n))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn normalize(x: &mut [f64]) -> f64 {
    let nrm = dot(x, x).sqrt();
    if nrm > 0.0 {
        x.iter_mut().for_each(|v| *v /= nrm);
    }
    nrm
}

fn orthogonalize(w: &mut [f64], v0: &[f64], basis: &[Vec<f64>]) {
    // Two passes of classical Gram-Schmidt.
    for _ in 0..2 {
        let c = dot(w, v0);
        axpy(-c, v0, w);
        for q in basis {
            let c = dot(w, q);
            axpy(-c, q, w);
        }
    }
}

/// Lanczos with full reorthogonalization and explicit restarts, tracking
/// both ends of the spectrum of `L` on `√π^⊥`.
fn lanczos_extremes(lap: &CsrMatrix, v0: &[f64], opts: &SpectralOptions) -> Result<SpectralReport> {
    let n = lap.dim();
    let k_max = opts.krylov_dim.min(n - 1).max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut total_iter = 0;
    let mut last = (f64::NAN, f64::NAN, f64::INFINITY);

    for _restart in 0..=opts.max_restarts {
        orthogonalize(&mut start, v0, &[]);
        if normalize(&mut start) == 0.0 {
            return Err(Error::Degenerate("start vector vanished after deflation".into()));
        }
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alpha: Vec<f64> = Vec::with_capacity(k_max);
        let mut beta: Vec<f64> = Vec::with_capacity(k_max);
        let mut w = vec![0.0; n];
        let mut outcome = None;
        for j in 0..k_max {
            lap.mul_vec(&basis[j], &mut w);
            total_iter += 1;
            let a = dot(&w, &basis[j]);
            alpha.push(a);
            axpy(-a, &basis[j], &mut w);
            if j > 0 {
                axpy(-beta[j - 1], &basis[j - 1], &mut w);
            }
            orthogonalize(&mut w, v0, &basis);
            let b = dot(&w, &w).sqrt();
            let exhausted = b < 1e-13 || j + 1 == k_max;
            if exhausted || (j + 1) % 10 == 0 {
                let (lo, hi, lo_vec, hi_vec) = tridiagonal_extremes(&alpha, &beta);
                let m = alpha.len();
                let r_lo = b * lo_vec[m - 1].abs();
                let r_hi = b * hi_vec[m - 1].abs();
                last = (lo, hi, r_lo.max(r_hi));
                if r_lo.max(r_hi) <= opts.tol || b < 1e-13 {
                    let mut rep = SpectralReport::from_laplacian_extremes(
                        lo.max(0.0),
                        hi,
                        SpectralMethod::Iterative,
                        r_lo.max(r_hi),
                        total_iter,
                        n,
                    );
                    rep.converged = true;
                    return Ok(rep);
                }
                if exhausted {
                    // Restart from a blend of the two extreme Ritz vectors.
                    let mut next = vec![0.0; n];
                    for (k, q) in basis.iter().enumerate() {
                        axpy(lo_vec[k] + 0.5 * hi_vec[k], q, &mut next);
                    }
                    outcome = Some(next);
                    break;
                }
            }
            beta.push(b);
            w.iter_mut().for_each(|x| *x /= b);
            basis.push(std::mem::replace(&mut w, vec![0.0; n]));
        }
        start = outcome.expect("restart vector is set when the basis fills");
    }
    Err(Error::NoConvergence { iterations: total_iter, residual: last.2 })
}

/// Smallest and largest eigenpairs of the symmetric tridiagonal matrix.
fn tridiagonal_extremes(alpha: &[f64], beta: &[f64]) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (mut lo, mut hi) = (0, 0);
    for k in 0..m {
        if eig.eigenvalues[k] < eig.eigenvalues[lo] {
            lo = k;
        }
        if eig.eigenvalues[k] > eig.eigenvalues[hi] {
            hi = k;
        }
    }
    (
        eig.eigenvalues[lo],
        eig.eigenvalues[hi],
        eig.eigenvectors.column(lo).iter().copied().collect(),
        eig.eigenvectors.column(hi).iter().copied().collect(),
    )
}
