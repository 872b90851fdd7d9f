//! Brute-force oracles shared by the integration tests. Everything here is
//! built from explicit configurations and the textbook definitions, not
//! from the library's builders.
#![allow(dead_code)]

use nalgebra::DMatrix;
use tempering_core::lumped::{ChainMeta, CsrMatrix, LumpedChain, StateLabel};

pub fn decode(mut idx: usize, q: usize, n: usize) -> Vec<usize> {
    let mut x = vec![0; n];
    for v in x.iter_mut() {
        *v = idx % q;
        idx /= q;
    }
    x
}

pub fn encode(x: &[usize], q: usize) -> usize {
    x.iter().rev().fold(0, |acc, &c| acc * q + c)
}

pub fn counts(x: &[usize], q: usize) -> Vec<u32> {
    let mut c = vec![0u32; q];
    for &v in x {
        c[v] += 1;
    }
    c
}

/// `Σ_{i<j} δ(x_i, x_j) + Σ_v h_{x_v}` from the explicit edge list.
pub fn energy(x: &[usize], fields: &[f64]) -> f64 {
    let mut pairs = 0usize;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            if x[i] == x[j] {
                pairs += 1;
            }
        }
    }
    pairs as f64 + x.iter().map(|&c| fields[c]).sum::<f64>()
}

fn ln_binomial_multi(c: &[u32]) -> f64 {
    let lf = |k: u32| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
    lf(c.iter().sum()) - c.iter().map(|&k| lf(k)).sum::<f64>()
}

/// Per-configuration log weights of a ladder level, straight from the
/// definitions: `β_i E(x)` for tempered levels and
/// `β_i E(x) + ((i−M)/M) ln multinomial(σ(x))` for dampened ones.
pub struct Levels {
    pub q: usize,
    pub n: usize,
    pub beta: f64,
    pub fields: Vec<f64>,
    pub exponents: Vec<f64>,
    pub dampened: bool,
}

impl Levels {
    pub fn new(q: usize, n: usize, beta: f64, fields: &[f64], m: usize, dampened: bool) -> Self {
        let exponents = if m == 0 { vec![1.0] } else { (0..=m).map(|i| i as f64 / m as f64).collect() };
        Levels { q, n, beta, fields: fields.to_vec(), exponents, dampened }
    }

    pub fn size(&self) -> usize {
        self.q.pow(self.n as u32)
    }

    pub fn log_weight(&self, level: usize, x: &[usize]) -> f64 {
        let e = self.exponents[level];
        let base = e * self.beta * energy(x, &self.fields);
        if self.dampened {
            base + (e - 1.0) * ln_binomial_multi(&counts(x, self.q))
        } else {
            base
        }
    }

    pub fn log_z(&self, level: usize) -> f64 {
        let w: Vec<f64> = (0..self.size()).map(|i| self.log_weight(level, &decode(i, self.q, self.n))).collect();
        let m = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + w.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
    }

    /// Off-diagonal single-site Metropolis moves at a level, scaled.
    fn metropolis_row(&self, level: usize, i: usize, scale: f64) -> Vec<(usize, f64)> {
        let x = decode(i, self.q, self.n);
        let here = self.log_weight(level, &x);
        let mut row = Vec::new();
        for v in 0..self.n {
            for c in 0..self.q {
                if c == x[v] {
                    continue;
                }
                let mut y = x.clone();
                y[v] = c;
                let p = (self.log_weight(level, &y) - here).exp().min(1.0) / (self.n * self.q) as f64;
                row.push((encode(&y, self.q), scale * p));
            }
        }
        row
    }
}

fn index_labels(k: usize) -> Vec<StateLabel> {
    (0..k).map(|i| StateLabel::Index { i }).collect()
}

/// Uniform vertex, uniform color, Metropolis acceptance on all `q^n`
/// configurations.
pub fn full_chain(q: usize, n: usize, beta: f64, fields: &[f64]) -> LumpedChain {
    let lv = Levels::new(q, n, beta, fields, 0, false);
    let rows = (0..lv.size()).map(|i| lv.metropolis_row(0, i, 1.0)).collect();
    let stat = (0..lv.size()).map(|i| lv.log_weight(0, &decode(i, q, n))).collect();
    LumpedChain::new(index_labels(lv.size()), CsrMatrix::from_offdiag_rows(rows), stat, ChainMeta::new("full"))
}

/// Simulated tempering on `(x, i)`, index `i·q^n + x`.
pub fn full_tempering_chain(lv: &Levels) -> LumpedChain {
    let (size, m1) = (lv.size(), lv.exponents.len());
    let log_z: Vec<f64> = (0..m1).map(|i| lv.log_z(i)).collect();
    let mut rows = Vec::new();
    let mut stat = Vec::new();
    for level in 0..m1 {
        for x in 0..size {
            let cfg = decode(x, lv.q, lv.n);
            let mut row: Vec<(usize, f64)> =
                lv.metropolis_row(level, x, 0.5).into_iter().map(|(y, p)| (level * size + y, p)).collect();
            let here = lv.log_weight(level, &cfg) - log_z[level];
            for j in [level as i64 - 1, level as i64 + 1] {
                if j < 0 || j as usize >= m1 {
                    continue;
                }
                let j = j as usize;
                let there = lv.log_weight(j, &cfg) - log_z[j];
                row.push((j * size + x, 0.25 * (there - here).exp().min(1.0)));
            }
            rows.push(row);
            stat.push(here);
        }
    }
    LumpedChain::new(
        index_labels(size * m1),
        CsrMatrix::from_offdiag_rows(rows),
        stat,
        ChainMeta::new("full-tempering"),
    )
}

/// Swapping chain on `(x_0, …, x_M)`, mixed radix with level 0 most
/// significant.
pub fn full_swap_chain(lv: &Levels) -> LumpedChain {
    let (size, m1) = (lv.size(), lv.exponents.len());
    let m = m1 - 1;
    let total = size.pow(m1 as u32);
    let split = |mut s: usize| {
        let mut xs = vec![0; m1];
        for i in (0..m1).rev() {
            xs[i] = s % size;
            s /= size;
        }
        xs
    };
    let join = |xs: &[usize]| xs.iter().fold(0, |acc, &x| acc * size + x);
    let mut rows = Vec::new();
    let mut stat = Vec::new();
    for s in 0..total {
        let xs = split(s);
        let cfgs: Vec<Vec<usize>> = xs.iter().map(|&x| decode(x, lv.q, lv.n)).collect();
        let level_p = if m == 0 { 1.0 } else { 0.5 / m1 as f64 };
        let mut row = Vec::new();
        for i in 0..m1 {
            for (y, p) in lv.metropolis_row(i, xs[i], level_p) {
                let mut ys = xs.clone();
                ys[i] = y;
                row.push((join(&ys), p));
            }
        }
        for i in 0..m {
            if xs[i] == xs[i + 1] {
                continue;
            }
            let dw = lv.log_weight(i, &cfgs[i + 1]) + lv.log_weight(i + 1, &cfgs[i])
                - lv.log_weight(i, &cfgs[i])
                - lv.log_weight(i + 1, &cfgs[i + 1]);
            let mut ys = xs.clone();
            ys.swap(i, i + 1);
            row.push((join(&ys), 0.5 / m as f64 * dw.exp().min(1.0)));
        }
        rows.push(row);
        stat.push((0..m1).map(|i| lv.log_weight(i, &cfgs[i])).sum());
    }
    LumpedChain::new(index_labels(total), CsrMatrix::from_offdiag_rows(rows), stat, ChainMeta::new("full-swap"))
}

/// Swapping chain for `π_i ∝ C^{e_i |x|}` on `[-N, N']`, walk proposals
/// `±1` with probability 1/2 each, holding at both ends.
pub fn exp_swap_chain(c: f64, n_neg: i64, n_pos: i64, exponents: &[f64]) -> (LumpedChain, Vec<Vec<i64>>) {
    let width = (n_neg + n_pos + 1) as usize;
    let m1 = exponents.len();
    let m = m1 - 1;
    let total = width.pow(m1 as u32);
    let split = |mut s: usize| {
        let mut xs = vec![0i64; m1];
        for i in (0..m1).rev() {
            xs[i] = (s % width) as i64 - n_neg;
            s /= width;
        }
        xs
    };
    let join = |xs: &[i64]| xs.iter().fold(0usize, |acc, &x| acc * width + (x + n_neg) as usize);
    let lw = |i: usize, x: i64| exponents[i] * x.unsigned_abs() as f64 * c.ln();
    let mut rows = Vec::new();
    let mut stat = Vec::new();
    let mut points = Vec::new();
    for s in 0..total {
        let xs = split(s);
        let level_p = if m == 0 { 1.0 } else { 0.5 / m1 as f64 };
        let mut row = Vec::new();
        for i in 0..m1 {
            for y in [xs[i] - 1, xs[i] + 1] {
                if y < -n_neg || y > n_pos {
                    continue;
                }
                let mut ys = xs.clone();
                ys[i] = y;
                row.push((join(&ys), level_p * 0.5 * (lw(i, y) - lw(i, xs[i])).exp().min(1.0)));
            }
        }
        for i in 0..m {
            let dw = lw(i, xs[i + 1]) + lw(i + 1, xs[i]) - lw(i, xs[i]) - lw(i + 1, xs[i + 1]);
            let mut ys = xs.clone();
            ys.swap(i, i + 1);
            if ys != xs {
                row.push((join(&ys), 0.5 / m as f64 * dw.exp().min(1.0)));
            }
        }
        rows.push(row);
        stat.push((0..m1).map(|i| lw(i, xs[i])).sum());
        points.push(xs);
    }
    (
        LumpedChain::new(index_labels(total), CsrMatrix::from_offdiag_rows(rows), stat, ChainMeta::new("exp-swap")),
        points,
    )
}

/// `P̄(a, b) = Σ_{x∈a, y∈b} π(x) P(x, y) / π̄(a)` and the part masses.
pub fn lump(chain: &LumpedChain, labels: &[usize], parts: usize) -> (DMatrix<f64>, Vec<f64>) {
    let pi = chain.pi();
    let mut mass = vec![0.0; parts];
    let mut flow = DMatrix::zeros(parts, parts);
    for i in 0..chain.len() {
        mass[labels[i]] += pi[i];
        for (j, p) in chain.matrix.row(i) {
            flow[(labels[i], labels[j])] += pi[i] * p;
        }
    }
    for a in 0..parts {
        for b in 0..parts {
            flow[(a, b)] /= mass[a];
        }
    }
    (flow, mass)
}

/// Labels a full single-configuration chain by the class order of a lumped
/// chain's states.
pub fn class_labels(lumped: &LumpedChain, q: usize, n: usize, size: usize) -> Vec<usize> {
    let classes: Vec<Vec<u32>> =
        lumped.states.iter().map(|s| s.sigma().expect("class label").counts().to_vec()).collect();
    (0..size)
        .map(|i| {
            let c = counts(&decode(i, q, n), q);
            classes.iter().position(|s| *s == c).expect("class present")
        })
        .collect()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `1 − |λ_1|` from nalgebra's symmetric eigensolver; the top eigenvector
/// is identified by its overlap with `√π`.
pub fn dense_gap(p: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let (l1, _) = dense_extremes(p, pi);
    1.0 - l1
}

/// `(|λ_1|, λ_2)`: the largest non-trivial modulus and the second eigenvalue.
pub fn dense_extremes(p: &DMatrix<f64>, pi: &[f64]) -> (f64, f64) {
    let k = p.nrows();
    let mut s = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            s[(i, j)] = 0.5 * (p[(i, j)] * (pi[i] / pi[j]).sqrt() + p[(j, i)] * (pi[j] / pi[i]).sqrt());
        }
    }
    let eig = nalgebra::SymmetricEigen::new(s);
    let root: Vec<f64> = pi.iter().map(|x| x.sqrt()).collect();
    let overlap = |a: usize| eig.eigenvectors.column(a).iter().zip(&root).map(|(u, r)| u * r).sum::<f64>().abs();
    let top = (0..k).max_by(|&a, &b| overlap(a).total_cmp(&overlap(b))).expect("non-empty");
    let rest = (0..k).filter(|&i| i != top).map(|i| eig.eigenvalues[i]);
    let l1 = rest.clone().map(f64::abs).fold(0.0, f64::max);
    let l2 = rest.fold(f64::NEG_INFINITY, f64::max);
    (l1, l2)
}

/// Worst-start TV mixing time by plain repeated multiplication.
pub fn brute_tv_time(p: &DMatrix<f64>, pi: &[f64], eps: f64, cap: usize) -> Option<usize> {
    let k = p.nrows();
    let mut pt = DMatrix::<f64>::identity(k, k);
    for t in 1..=cap {
        pt = &pt * p;
        let worst = (0..k).map(|x| 0.5 * (0..k).map(|y| (pt[(x, y)] - pi[y]).abs()).sum::<f64>()).fold(0.0, f64::max);
        if worst <= eps {
            return Some(t);
        }
    }
    None
}

/// Random reversible chain: symmetric conductances over random positive
/// weights, with a holding floor.
pub fn random_reversible(rng: &mut impl rand::Rng, k: usize, density: f64) -> LumpedChain {
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let mut c = DMatrix::zeros(k, k);
    for i in 0..k {
        // A path keeps the chain irreducible.
        if i + 1 < k {
            let v = rng.random_range(0.1..1.0);
            c[(i, i + 1)] = v;
            c[(i + 1, i)] = v;
        }
        for j in i + 2..k {
            if rng.random_bool(density) {
                let v = rng.random_range(0.0..1.0);
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
    }
    // P(i,j) = c_ij min(w_i, w_j) / (w_i · norm): reversible for π ∝ w.
    let mut rows = Vec::new();
    let mut norm: f64 = 0.0;
    for i in 0..k {
        let s: f64 = (0..k).map(|j| c[(i, j)] * w[i].min(w[j]) / w[i]).sum();
        norm = norm.max(s);
    }
    norm *= rng.random_range(1.0..2.0);
    for i in 0..k {
        rows.push(
            (0..k)
                .filter(|&j| j != i && c[(i, j)] > 0.0)
                .map(|j| (j, c[(i, j)] * w[i].min(w[j]) / (w[i] * norm)))
                .collect(),
        );
    }
    LumpedChain::new(
        index_labels(k),
        CsrMatrix::from_offdiag_rows(rows),
        w.iter().map(|x| x.ln()).collect(),
        ChainMeta::new("random"),
    )
}
