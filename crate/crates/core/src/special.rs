//! Real special functions on the positive axis.
//!
//! `log_gamma` and `digamma` raise the argument with the recurrence
//! `Γ(x + 1) = xΓ(x)` until it clears [`ASYMPTOTIC_CUTOFF`] and then sum the
//! Stirling / de Moivre asymptotic series.

use std::sync::OnceLock;

use crate::error::{domain, Result};

const ASYMPTOTIC_CUTOFF: f64 = 10.0;
const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

// B_2k for k = 1..=10.
const BERNOULLI_EVEN: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

/// Tolerances for truncated series evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionPolicy {
    /// Truncation stops once the bound on the neglected tail falls below this.
    pub abs_tol: f64,
    /// Minimum number of terms summed before truncation is considered.
    pub series_terms: usize,
}

impl Default for PrecisionPolicy {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            series_terms: 64,
        }
    }
}

impl PrecisionPolicy {
    pub fn new(abs_tol: f64, series_terms: usize) -> Result<Self> {
        let policy = Self {
            abs_tol,
            series_terms,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return Err(domain(format!("abs_tol must be positive, got {}", self.abs_tol)));
        }
        if self.series_terms < 16 {
            return Err(domain(format!(
                "series_terms must be at least 16, got {}",
                self.series_terms
            )));
        }
        Ok(())
    }
}

fn check_positive(x: f64, name: &str) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("{name} requires a finite positive argument, got {x}")))
    }
}

/// Natural logarithm of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    check_positive(x, "log_gamma")?;
    let mut shifted = x;
    let mut log_shift = 0.0;
    while shifted < ASYMPTOTIC_CUTOFF {
        log_shift += shifted.ln();
        shifted += 1.0;
    }
    Ok(stirling_log_gamma(shifted) - log_shift)
}

fn stirling_log_gamma(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv_sq = inv * inv;
    let mut power = inv;
    let mut correction = 0.0;
    for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
        let two_k = 2.0 * (k + 1) as f64;
        correction += b / (two_k * (two_k - 1.0)) * power;
        power *= inv_sq;
    }
    (x - 0.5) * x.ln() - x + HALF_LN_TWO_PI + correction
}

/// The digamma function ψ(x) = d/dx ln Γ(x) for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive(x, "digamma")?;
    let mut shifted = x;
    let mut shift_sum = 0.0;
    while shifted < ASYMPTOTIC_CUTOFF {
        shift_sum += 1.0 / shifted;
        shifted += 1.0;
    }
    let inv = 1.0 / shifted;
    let inv_sq = inv * inv;
    let mut power = inv_sq;
    let mut series = 0.0;
    for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
        let two_k = 2.0 * (k + 1) as f64;
        series += b / two_k * power;
        power *= inv_sq;
    }
    Ok(shifted.ln() - 0.5 * inv - series - shift_sum)
}

/// The trigamma function ψ'(x) for `x > 0`.
pub fn trigamma(x: f64) -> Result<f64> {
    check_positive(x, "trigamma")?;
    let mut shifted = x;
    let mut shift_sum = 0.0;
    while shifted < ASYMPTOTIC_CUTOFF {
        shift_sum += 1.0 / (shifted * shifted);
        shifted += 1.0;
    }
    let inv = 1.0 / shifted;
    let inv_sq = inv * inv;
    let mut power = inv_sq * inv;
    let mut series = 0.0;
    for b in BERNOULLI_EVEN.iter() {
        series += b * power;
        power *= inv_sq;
    }
    Ok(inv + 0.5 * inv_sq + series + shift_sum)
}

const FACTORIAL_TABLE_LEN: usize = 257;

fn factorial_table() -> &'static [f64; FACTORIAL_TABLE_LEN] {
    static TABLE: OnceLock<[f64; FACTORIAL_TABLE_LEN]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [0.0; FACTORIAL_TABLE_LEN];
        for k in 1..FACTORIAL_TABLE_LEN {
            table[k] = table[k - 1] + (k as f64).ln();
        }
        table
    })
}

/// ln(n!). Exact log-sums up to 256, `log_gamma(n + 1)` beyond.
pub fn log_factorial(n: u64) -> f64 {
    match usize::try_from(n) {
        Ok(k) if k < FACTORIAL_TABLE_LEN => factorial_table()[k],
        // n + 1 > 0, so log_gamma cannot fail here.
        _ => log_gamma(n as f64 + 1.0).expect("positive argument"),
    }
}
