//! Error bars for Monte Carlo estimates.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A value with its one-sigma standard error (zero for exact values).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub standard_error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, standard_error: 0.0 }
    }

    pub fn new(value: f64, standard_error: f64) -> Self {
        Self { value, standard_error }
    }

    /// Sum with errors combined in quadrature (independent estimates).
    pub fn sum<I: IntoIterator<Item = Estimate>>(items: I) -> Self {
        let (v, var) = items.into_iter().fold((0.0, 0.0), |(v, var), e| (v + e.value, var + e.standard_error * e.standard_error));
        Self { value: v, standard_error: var.sqrt() }
    }

    pub fn scale(self, c: f64) -> Self {
        Self { value: c * self.value, standard_error: c.abs() * self.standard_error }
    }

    pub fn offset(self, c: f64) -> Self {
        Self { value: self.value + c, standard_error: self.standard_error }
    }
}

/// Wilson score interval for a binomial proportion `p_hat` observed in `n` trials.
pub fn wilson_interval(p_hat: f64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p_hat + z2 / (2.0 * n)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// One-sigma error derived from the 95% Wilson interval width.
pub fn wilson_standard_error(p_hat: f64, n: u64) -> f64 {
    let (lo, hi) = wilson_interval(p_hat, n, Z95);
    (hi - lo) / (2.0 * Z95)
}
