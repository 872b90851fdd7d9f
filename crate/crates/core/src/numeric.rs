//! Log-domain helpers shared by every module.

use std::sync::OnceLock;

const TABLE_LEN: usize = 1 << 17;

fn table() -> &'static [f64; TABLE_LEN] {
    static TABLE: OnceLock<Box<[f64; TABLE_LEN]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t: Box<[f64; TABLE_LEN]> = vec![0.0; TABLE_LEN].into_boxed_slice().try_into().expect("length matches");
        // Neumaier-compensated running sum of ln k.
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for k in 2..TABLE_LEN {
            let term = (k as f64).ln();
            let s = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - s) + term;
            } else {
                comp += (term - s) + sum;
            }
            sum = s;
            t[k] = sum + comp;
        }
        t
    })
}

/// `ln k!`: a compensated-sum table below 2^17, the Stirling series above.
///
/// Relative error is below 1e-15 over the whole `u64` range that fits in
/// an `f64` without overflow of `k ln k`.
pub fn ln_factorial(k: u64) -> f64 {
    if (k as usize) < TABLE_LEN {
        return table()[k as usize];
    }
    let x = k as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // 1/(12x) - 1/(360x^3) + 1/(1260x^5) - 1/(1680x^7)
    let series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + series
}

/// `ln Γ(x)` for positive integer arguments, i.e. `ln (x-1)!`.
pub fn ln_gamma_int(x: u64) -> f64 {
    assert!(x >= 1, "ln_gamma_int needs a positive argument");
    ln_factorial(x - 1)
}

/// Numerically stable `ln Σ exp(v)`. Returns `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let mut acc = LogSumExp::new();
    for &v in values {
        acc.push(v);
    }
    acc.value()
}

/// Streaming accumulator for `ln Σ exp(v)` with a moving reference point.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self { max: f64::NEG_INFINITY, scaled: 0.0 }
    }

    pub fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v <= self.max {
            self.scaled += (v - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    pub fn merge(&mut self, other: &LogSumExp) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if self.max == f64::NEG_INFINITY {
            *self = *other;
            return;
        }
        if other.max <= self.max {
            self.scaled += other.scaled * (other.max - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - other.max).exp() + other.scaled;
            self.max = other.max;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// Binomial coefficient as f64; exact for the sizes used for state counts.
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn compensated_ln_factorial(k: u64) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for i in 2..=k {
            let term = (i as f64).ln();
            let s = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - s) + term;
            } else {
                comp += (term - s) + sum;
            }
            sum = s;
        }
        sum + comp
    }

    #[test]
    fn small_factorials_are_exact() {
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
        assert!((ln_factorial(5) - 120f64.ln()).abs() < 1e-15);
        assert!((ln_factorial(12) - 479001600f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn table_and_series_agree() {
        for &k in &[256u64, 257, 300, 1000, 4097, 12000, 100_001] {
            let exact = compensated_ln_factorial(k);
            let rel = (ln_factorial(k) - exact).abs() / exact;
            assert!(rel < 1e-14, "k={k} rel={rel}");
        }
        let k = TABLE_LEN as u64;
        let exact = compensated_ln_factorial(k);
        assert!((ln_factorial(k) - exact).abs() / exact < 1e-13);
        let d = ln_factorial(k) - ln_factorial(k - 1);
        assert!((d - (k as f64).ln()).abs() < 1e-8);
    }

    #[test]
    fn lse_handles_wide_ranges() {
        let v = [-1000.0, 0.0, -1000.0];
        assert!((log_sum_exp(&v) - 0.0).abs() < 1e-15);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        let v = [2f64.ln(), 3f64.ln()];
        assert!((log_sum_exp(&v) - 5f64.ln()).abs() < 1e-15);

        let mut a = LogSumExp::new();
        a.push(1.0);
        let mut b = LogSumExp::new();
        b.push(5.0);
        b.push(-3.0);
        a.merge(&b);
        assert!((a.value() - log_sum_exp(&[1.0, 5.0, -3.0])).abs() < 1e-14);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(14, 2), 91.0);
        assert_eq!(binomial(3, 5), 0.0);
    }
}
