//! Exponential families in natural-parameter form.
//!
//! Every family is written as `h(x) exp(ηᵀT(x) − A(η))`. All families except
//! the Poisson product use `h ≡ 1`; any constant factor such as
//! `(2π)^{-D/2}` is folded into the log-partition `A`, so for those families
//! entropy and pseudo-entropy coincide.
//!
//! Parameter layouts (natural / standard):
//!
//! | family                | natural                            | standard            |
//! |-----------------------|------------------------------------|---------------------|
//! | `BernoulliProduct`    | `logit π_d`                        | `π_d`               |
//! | `Categorical`         | `log(π_i / π_C)`, `i < C`          | `π_1..π_{C-1}`      |
//! | `GaussianScalarVar`   | `μ_d/σ²`, then `−1/(2σ²)`          | `μ_1..μ_D, σ²`      |
//! | `GaussianDiagCov`     | `μ_d/σ_d²`, then `−1/(2σ_d²)`      | `μ_1..μ_D, σ²_1..σ²_D` |
//! | `Gamma`               | `(α − 1, −β)`                      | `(α, β)` shape/rate |
//! | `PoissonProduct`      | `log λ_d`                          | `λ_d`               |
//!
//! Data points are `&[f64]`. Discrete families require integer values;
//! categorical states are encoded as a single 0-based index, with the last
//! state mapping to the all-zero statistic.

use std::f64::consts::{E, PI};
use std::ops::Deref;

use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, support, Result};
use crate::special::{digamma, log_factorial, log_gamma, PrecisionPolicy};

macro_rules! vector_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn new(values: Vec<f64>) -> Self {
                Self(values)
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(values: Vec<f64>) -> Self {
                Self(values)
            }
        }

        impl From<&[f64]> for $name {
            fn from(values: &[f64]) -> Self {
                Self(values.to_vec())
            }
        }
    };
}

vector_newtype!(
    /// Natural parameters η (or ζ for a prior).
    NaturalParams
);
vector_newtype!(
    /// Parameters in the family's conventional parameterization.
    StandardParams
);
vector_newtype!(
    /// Sufficient statistics T(x).
    SufficientStats
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMeasure {
    UnitConstant,
    PoissonFactorial,
}

/// An exponential family together with its dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    BernoulliProduct { dim: usize },
    Categorical { states: usize },
    GaussianScalarVar { dim: usize },
    GaussianDiagCov { dim: usize },
    Gamma,
    PoissonProduct { dim: usize },
}

pub(crate) fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + Σ exp(values))`.
fn log1p_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(0.0_f64, f64::max);
    let sum: f64 = (-max).exp() + values.iter().map(|v| (v - max).exp()).sum::<f64>();
    max + sum.ln()
}

fn is_integer(v: f64) -> bool {
    v.is_finite() && v.fract() == 0.0
}

/// `x ln x` with the convention `0 ln 0 = 0`.
pub(crate) fn x_ln_x(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Sum of `f(k, ln p(k))` against Pois(k; λ), truncated once the tail bound
/// drops below `policy.abs_tol`.
pub(crate) fn poisson_series<F>(rate: f64, policy: &PrecisionPolicy, mut f: F) -> f64
where
    F: FnMut(u64, f64) -> f64,
{
    let log_rate = rate.ln();
    let mut total = 0.0;
    let mut k: u64 = 0;
    loop {
        let log_p = k as f64 * log_rate - rate - log_factorial(k);
        let term = f(k, log_p);
        total += term;
        let ratio = rate / (k as f64 + 1.0);
        if k as usize >= policy.series_terms && ratio <= 0.5 {
            // Ratio test: later summands shrink at least geometrically.
            let magnitude = log_p.exp() * (1.0 + log_p.abs() + (k as f64).ln_1p());
            if magnitude * ratio / (1.0 - ratio) < policy.abs_tol {
                break;
            }
        }
        k += 1;
    }
    total
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::BernoulliProduct { .. } => "bernoulli_product",
            Family::Categorical { .. } => "categorical",
            Family::GaussianScalarVar { .. } => "gaussian_scalar_var",
            Family::GaussianDiagCov { .. } => "gaussian_diag_cov",
            Family::Gamma => "gamma",
            Family::PoissonProduct { .. } => "poisson_product",
        }
    }

    /// Length of a data point.
    pub fn data_dim(&self) -> usize {
        match *self {
            Family::BernoulliProduct { dim }
            | Family::GaussianScalarVar { dim }
            | Family::GaussianDiagCov { dim }
            | Family::PoissonProduct { dim } => dim,
            Family::Categorical { .. } | Family::Gamma => 1,
        }
    }

    /// Length of the natural (and standard) parameter vector.
    pub fn natural_dim(&self) -> usize {
        match *self {
            Family::BernoulliProduct { dim } | Family::PoissonProduct { dim } => dim,
            Family::Categorical { states } => states.saturating_sub(1),
            Family::GaussianScalarVar { dim } => dim + 1,
            Family::GaussianDiagCov { dim } => 2 * dim,
            Family::Gamma => 2,
        }
    }

    pub fn base_measure(&self) -> BaseMeasure {
        match self {
            Family::PoissonProduct { .. } => BaseMeasure::PoissonFactorial,
            _ => BaseMeasure::UnitConstant,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(
            self,
            Family::BernoulliProduct { .. } | Family::Categorical { .. } | Family::PoissonProduct { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Family::BernoulliProduct { dim }
            | Family::GaussianScalarVar { dim }
            | Family::GaussianDiagCov { dim }
            | Family::PoissonProduct { dim } => dim >= 1,
            Family::Categorical { states } => states >= 1,
            Family::Gamma => true,
        };
        if ok {
            Ok(())
        } else {
            Err(domain(format!("{} needs a positive dimension", self.name())))
        }
    }

    fn check_len(&self, values: &[f64], what: &str) -> Result<()> {
        if values.len() != self.natural_dim() {
            return Err(domain(format!(
                "{} expects {} {what} values, got {}",
                self.name(),
                self.natural_dim(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(domain(format!("{} {what} value {bad} is not finite", self.name())));
        }
        Ok(())
    }

    /// Strict natural-domain membership, no epsilon slack.
    pub fn check_natural(&self, n: &[f64]) -> Result<()> {
        self.check_len(n, "natural")?;
        let ok = match *self {
            Family::GaussianScalarVar { dim } => n[dim] < 0.0,
            Family::GaussianDiagCov { dim } => n[dim..].iter().all(|&b| b < 0.0),
            Family::Gamma => n[0] > -1.0 && n[1] < 0.0,
            Family::BernoulliProduct { .. }
            | Family::Categorical { .. }
            | Family::PoissonProduct { .. } => true,
        };
        if ok {
            Ok(())
        } else {
            Err(domain(format!("{:?} outside the {} natural domain", n, self.name())))
        }
    }

    pub fn check_standard(&self, s: &[f64]) -> Result<()> {
        self.check_len(s, "standard")?;
        let ok = match *self {
            Family::BernoulliProduct { .. } => s.iter().all(|&p| p > 0.0 && p < 1.0),
            Family::Categorical { .. } => {
                s.iter().all(|&p| p > 0.0) && s.iter().sum::<f64>() < 1.0
            }
            Family::GaussianScalarVar { dim } => s[dim] > 0.0,
            Family::GaussianDiagCov { dim } => s[dim..].iter().all(|&v| v > 0.0),
            Family::Gamma => s[0] > 0.0 && s[1] > 0.0,
            Family::PoissonProduct { .. } => s.iter().all(|&l| l > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(domain(format!("{:?} outside the {} parameter domain", s, self.name())))
        }
    }

    pub fn check_support(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.data_dim() {
            return Err(support(format!(
                "{} expects data points of length {}, got {}",
                self.name(),
                self.data_dim(),
                x.len()
            )));
        }
        let ok = match *self {
            Family::BernoulliProduct { .. } => x.iter().all(|&v| v == 0.0 || v == 1.0),
            Family::Categorical { states } => {
                is_integer(x[0]) && x[0] >= 0.0 && (x[0] as usize) < states
            }
            Family::GaussianScalarVar { .. } | Family::GaussianDiagCov { .. } => {
                x.iter().all(|v| v.is_finite())
            }
            Family::Gamma => x[0].is_finite() && x[0] > 0.0,
            Family::PoissonProduct { .. } => x.iter().all(|&v| is_integer(v) && v >= 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(support(format!("{:?} outside the {} support", x, self.name())))
        }
    }

    pub fn to_natural(&self, s: &StandardParams) -> Result<NaturalParams> {
        self.check_standard(s)?;
        let n = match *self {
            Family::BernoulliProduct { .. } => s.iter().map(|&p| (p / (1.0 - p)).ln()).collect(),
            Family::Categorical { .. } => {
                let last = 1.0 - s.iter().sum::<f64>();
                s.iter().map(|&p| (p / last).ln()).collect()
            }
            Family::GaussianScalarVar { dim } => {
                let var = s[dim];
                let mut n: Vec<f64> = s[..dim].iter().map(|m| m / var).collect();
                n.push(-0.5 / var);
                n
            }
            Family::GaussianDiagCov { dim } => {
                let (means, vars) = s.split_at(dim);
                means
                    .iter()
                    .zip(vars)
                    .map(|(m, v)| m / v)
                    .chain(vars.iter().map(|v| -0.5 / v))
                    .collect()
            }
            Family::Gamma => vec![s[0] - 1.0, -s[1]],
            Family::PoissonProduct { .. } => s.iter().map(|l| l.ln()).collect(),
        };
        Ok(NaturalParams(n))
    }

    pub fn from_natural(&self, n: &NaturalParams) -> Result<StandardParams> {
        self.check_natural(n)?;
        let s = match *self {
            Family::BernoulliProduct { .. } => n.iter().map(|&a| sigmoid(a)).collect(),
            Family::Categorical { .. } => {
                let log_last = -log1p_sum_exp(n);
                n.iter().map(|&a| (a + log_last).exp()).collect()
            }
            Family::GaussianScalarVar { dim } => {
                let var = -0.5 / n[dim];
                let mut s: Vec<f64> = n[..dim].iter().map(|a| a * var).collect();
                s.push(var);
                s
            }
            Family::GaussianDiagCov { dim } => {
                let (lin, quad) = n.split_at(dim);
                let vars: Vec<f64> = quad.iter().map(|b| -0.5 / b).collect();
                lin.iter()
                    .zip(&vars)
                    .map(|(a, v)| a * v)
                    .chain(vars.iter().copied())
                    .collect()
            }
            Family::Gamma => vec![n[0] + 1.0, -n[1]],
            Family::PoissonProduct { .. } => n.iter().map(|a| a.exp()).collect(),
        };
        Ok(StandardParams(s))
    }

    /// Log-partition A(η).
    pub fn log_partition(&self, n: &NaturalParams) -> Result<f64> {
        self.check_natural(n)?;
        let a = match *self {
            Family::BernoulliProduct { .. } => n.iter().map(|&a| softplus(a)).sum(),
            Family::Categorical { .. } => log1p_sum_exp(n),
            Family::GaussianScalarVar { dim } => {
                let b = n[dim];
                let quad: f64 = n[..dim].iter().map(|a| a * a).sum();
                let d = dim as f64;
                -quad / (4.0 * b) - 0.5 * d * (-2.0 * b).ln() + 0.5 * d * (2.0 * PI).ln()
            }
            Family::GaussianDiagCov { dim } => (0..dim)
                .map(|d| {
                    let (a, b) = (n[d], n[dim + d]);
                    -a * a / (4.0 * b) - 0.5 * (-2.0 * b).ln() + 0.5 * (2.0 * PI).ln()
                })
                .sum(),
            Family::Gamma => {
                let shape = n[0] + 1.0;
                log_gamma(shape)? - shape * (-n[1]).ln()
            }
            Family::PoissonProduct { .. } => n.iter().map(|a| a.exp()).sum(),
        };
        Ok(a)
    }

    /// ∇A(η) = E[T(x)].
    pub fn grad_log_partition(&self, n: &NaturalParams) -> Result<Vec<f64>> {
        self.check_natural(n)?;
        let g = match *self {
            Family::BernoulliProduct { .. } => n.iter().map(|&a| sigmoid(a)).collect(),
            Family::Categorical { .. } => {
                let lse = log1p_sum_exp(n);
                n.iter().map(|a| (a - lse).exp()).collect()
            }
            Family::GaussianScalarVar { dim } => {
                let b = n[dim];
                let mut g: Vec<f64> = n[..dim].iter().map(|a| -a / (2.0 * b)).collect();
                let quad: f64 = n[..dim].iter().map(|a| a * a).sum();
                g.push(quad / (4.0 * b * b) - dim as f64 / (2.0 * b));
                g
            }
            Family::GaussianDiagCov { dim } => {
                let (lin, quad) = n.split_at(dim);
                let means = lin.iter().zip(quad).map(|(a, b)| -a / (2.0 * b));
                let second = lin
                    .iter()
                    .zip(quad)
                    .map(|(a, b)| a * a / (4.0 * b * b) - 1.0 / (2.0 * b));
                means.chain(second).collect()
            }
            Family::Gamma => {
                let shape = n[0] + 1.0;
                let rate = -n[1];
                vec![digamma(shape)? - rate.ln(), shape / rate]
            }
            Family::PoissonProduct { .. } => n.iter().map(|a| a.exp()).collect(),
        };
        Ok(g)
    }

    pub fn sufficient_stats(&self, x: &[f64]) -> Result<SufficientStats> {
        self.check_support(x)?;
        let t = match *self {
            Family::BernoulliProduct { .. } | Family::PoissonProduct { .. } => x.to_vec(),
            Family::Categorical { states } => {
                let c = x[0] as usize;
                (0..states - 1).map(|i| if i == c { 1.0 } else { 0.0 }).collect()
            }
            Family::GaussianScalarVar { .. } => {
                let mut t = x.to_vec();
                t.push(x.iter().map(|v| v * v).sum());
                t
            }
            Family::GaussianDiagCov { .. } => {
                x.iter().copied().chain(x.iter().map(|v| v * v)).collect()
            }
            Family::Gamma => vec![x[0].ln(), x[0]],
        };
        Ok(SufficientStats(t))
    }

    /// log h(x).
    pub fn log_base_measure(&self, x: &[f64]) -> Result<f64> {
        self.check_support(x)?;
        Ok(match self.base_measure() {
            BaseMeasure::UnitConstant => 0.0,
            BaseMeasure::PoissonFactorial => -x.iter().map(|&k| log_factorial(k as u64)).sum::<f64>(),
        })
    }

    /// log h(x) + ηᵀT(x) − A(η).
    pub fn log_density(&self, n: &NaturalParams, x: &[f64]) -> Result<f64> {
        Ok(self.log_base_measure(x)? + self.log_density_unnormalized_base(n, x)?)
    }

    /// ηᵀT(x) − A(η): the density with respect to the reweighted measure
    /// h(x)dμ(x).
    pub fn log_density_unnormalized_base(&self, n: &NaturalParams, x: &[f64]) -> Result<f64> {
        let t = self.sufficient_stats(x)?;
        let a = self.log_partition(n)?;
        Ok(n.iter().zip(t.iter()).map(|(e, t)| e * t).sum::<f64>() - a)
    }

    /// Entropy in nats. The Poisson product uses truncated sums.
    pub fn entropy(&self, s: &StandardParams) -> Result<f64> {
        self.entropy_with(s, &PrecisionPolicy::default())
    }

    pub fn entropy_with(&self, s: &StandardParams, policy: &PrecisionPolicy) -> Result<f64> {
        self.check_standard(s)?;
        let h = match *self {
            Family::BernoulliProduct { .. } => {
                s.iter().map(|&p| -x_ln_x(p) - x_ln_x(1.0 - p)).sum()
            }
            Family::Categorical { .. } => {
                let last = 1.0 - s.iter().sum::<f64>();
                -s.iter().map(|&p| x_ln_x(p)).sum::<f64>() - x_ln_x(last)
            }
            Family::GaussianScalarVar { dim } => 0.5 * dim as f64 * (2.0 * PI * E * s[dim]).ln(),
            Family::GaussianDiagCov { dim } => {
                s[dim..].iter().map(|v| 0.5 * (2.0 * PI * E * v).ln()).sum()
            }
            Family::Gamma => {
                let (shape, rate) = (s[0], s[1]);
                shape - rate.ln() + log_gamma(shape)? + (1.0 - shape) * digamma(shape)?
            }
            Family::PoissonProduct { .. } => s
                .iter()
                .map(|&rate| poisson_series(rate, policy, |_, log_p| -log_p.exp() * log_p))
                .sum(),
        };
        Ok(h)
    }

    /// Pseudo-entropy `−ηᵀ∇A(η) + A(η)`.
    pub fn pseudo_entropy(&self, n: &NaturalParams) -> Result<f64> {
        let g = self.grad_log_partition(n)?;
        let a = self.log_partition(n)?;
        Ok(a - n.iter().zip(&g).map(|(e, g)| e * g).sum::<f64>())
    }

    /// E_p[log h(x)]; exactly zero for unit base measures.
    pub fn expected_log_base_measure(&self, s: &StandardParams) -> Result<f64> {
        self.expected_log_base_measure_with(s, &PrecisionPolicy::default())
    }

    pub fn expected_log_base_measure_with(
        &self,
        s: &StandardParams,
        policy: &PrecisionPolicy,
    ) -> Result<f64> {
        self.check_standard(s)?;
        Ok(match self.base_measure() {
            BaseMeasure::UnitConstant => 0.0,
            BaseMeasure::PoissonFactorial => -s
                .iter()
                .map(|&rate| poisson_series(rate, policy, |k, log_p| log_p.exp() * log_factorial(k)))
                .sum::<f64>(),
        })
    }

    /// Jacobian ∂η/∂sᵀ of [`Family::to_natural`], row-major
    /// `natural_dim × natural_dim`.
    pub fn jacobian_to_natural(&self, s: &StandardParams) -> Result<nalgebra::DMatrix<f64>> {
        self.check_standard(s)?;
        let k = self.natural_dim();
        let mut j = nalgebra::DMatrix::zeros(k, k);
        match *self {
            Family::BernoulliProduct { .. } => {
                for (i, &p) in s.iter().enumerate() {
                    j[(i, i)] = 1.0 / (p * (1.0 - p));
                }
            }
            Family::Categorical { .. } => {
                let last = 1.0 - s.iter().sum::<f64>();
                for i in 0..k {
                    for c in 0..k {
                        j[(i, c)] = if i == c { 1.0 / s[c] } else { 0.0 } + 1.0 / last;
                    }
                }
            }
            Family::GaussianScalarVar { dim } => {
                let var = s[dim];
                for d in 0..dim {
                    j[(d, d)] = 1.0 / var;
                    j[(d, dim)] = -s[d] / (var * var);
                }
                j[(dim, dim)] = 0.5 / (var * var);
            }
            Family::GaussianDiagCov { dim } => {
                for d in 0..dim {
                    let var = s[dim + d];
                    j[(d, d)] = 1.0 / var;
                    j[(d, dim + d)] = -s[d] / (var * var);
                    j[(dim + d, dim + d)] = 0.5 / (var * var);
                }
            }
            Family::Gamma => {
                j[(0, 0)] = 1.0;
                j[(1, 1)] = -1.0;
            }
            Family::PoissonProduct { .. } => {
                for (i, &l) in s.iter().enumerate() {
                    j[(i, i)] = 1.0 / l;
                }
            }
        }
        Ok(j)
    }

    /// A random point inside the standard-parameter domain, used for
    /// criterion grids and fixtures.
    pub fn random_standard<R: Rng + ?Sized>(&self, rng: &mut R) -> StandardParams {
        let mut uniform = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
        let values = match *self {
            Family::BernoulliProduct { dim } => (0..dim).map(|_| uniform(0.05, 0.95)).collect(),
            Family::Categorical { states } => {
                let raw: Vec<f64> = (0..states).map(|_| uniform(0.2, 1.0)).collect();
                let total: f64 = raw.iter().sum();
                raw[..states - 1].iter().map(|r| r / total).collect()
            }
            Family::GaussianScalarVar { dim } => {
                let mut v: Vec<f64> = (0..dim).map(|_| uniform(-3.0, 3.0)).collect();
                v.push(uniform(-2.3, 2.3).exp());
                v
            }
            Family::GaussianDiagCov { dim } => (0..dim)
                .map(|_| uniform(-3.0, 3.0))
                .collect::<Vec<_>>()
                .into_iter()
                .chain((0..dim).map(|_| uniform(-2.3, 2.3).exp()).collect::<Vec<_>>())
                .collect(),
            Family::Gamma => vec![uniform(-1.2, 2.3).exp(), uniform(-2.3, 2.3).exp()],
            Family::PoissonProduct { dim } => (0..dim).map(|_| uniform(-2.3, 3.0).exp()).collect(),
        };
        StandardParams(values)
    }

    /// Draws `count` i.i.d. points.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        s: &StandardParams,
        rng: &mut R,
        count: usize,
    ) -> Result<Vec<Vec<f64>>> {
        self.check_standard(s)?;
        let mut out = Vec::with_capacity(count);
        match *self {
            Family::BernoulliProduct { .. } => {
                for _ in 0..count {
                    out.push(
                        s.iter()
                            .map(|&p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
                            .collect(),
                    );
                }
            }
            Family::Categorical { states } => {
                for _ in 0..count {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut state = states - 1;
                    for (i, p) in s.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            state = i;
                            break;
                        }
                    }
                    out.push(vec![state as f64]);
                }
            }
            Family::GaussianScalarVar { dim } => {
                let sd = s[dim].sqrt();
                for _ in 0..count {
                    out.push(
                        s[..dim]
                            .iter()
                            .map(|&m| Normal::new(m, sd).expect("valid normal").sample(rng))
                            .collect(),
                    );
                }
            }
            Family::GaussianDiagCov { dim } => {
                let (means, vars) = s.split_at(dim);
                for _ in 0..count {
                    out.push(
                        means
                            .iter()
                            .zip(vars)
                            .map(|(&m, &v)| Normal::new(m, v.sqrt()).expect("valid normal").sample(rng))
                            .collect(),
                    );
                }
            }
            Family::Gamma => {
                let dist = GammaDist::new(s[0], 1.0 / s[1])
                    .map_err(|e| domain(format!("gamma sampler: {e}")))?;
                for _ in 0..count {
                    // The sampler can underflow to 0 for tiny shapes; keep the
                    // draw inside the open support.
                    let draw: f64 = dist.sample(rng);
                    out.push(vec![draw.max(f64::MIN_POSITIVE)]);
                }
            }
            Family::PoissonProduct { .. } => {
                let dists = s
                    .iter()
                    .map(|&l| Poisson::new(l).map_err(|e| domain(format!("poisson sampler: {e}"))))
                    .collect::<Result<Vec<_>>>()?;
                for _ in 0..count {
                    out.push(dists.iter().map(|d| d.sample(rng)).collect());
                }
            }
        }
        Ok(out)
    }
}
