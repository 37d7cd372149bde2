//! ELBO decomposition `F = F1 - F2 - F3`, entropy sums and their pseudo
//! counterparts. Every integral over latents is exact: finite-state sums or
//! closed-form Gaussian moments.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{x_ln_x, BaseMeasure, Family, NaturalParams};
use crate::model::{GenerativeModel, LatentSupport, LinearGaussian};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const NORMALIZATION_TOL: f64 = 1e-9;

/// Per-data-point variational distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariationalState {
    /// N × C responsibilities over mixture components.
    CategoricalTable { probs: Vec<Vec<f64>> },
    /// N × |states| distribution over an enumerated latent space; for SBNs
    /// state `s` has `z_h = (s >> h) & 1`.
    EnumeratedTable { probs: Vec<Vec<f64>> },
    /// N × H independent Bernoulli probabilities.
    BernoulliMeanField { probs: Vec<Vec<f64>> },
    /// Per-point Gaussian `N(mean_n, cov_n)`.
    GaussianMoments {
        means: Vec<DVector<f64>>,
        covs: Vec<DMatrix<f64>>,
    },
}

impl VariationalState {
    pub fn len(&self) -> usize {
        match self {
            VariationalState::CategoricalTable { probs }
            | VariationalState::EnumeratedTable { probs }
            | VariationalState::BernoulliMeanField { probs } => probs.len(),
            VariationalState::GaussianMoments { means, .. } => means.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            VariationalState::CategoricalTable { .. } => "categorical_table",
            VariationalState::EnumeratedTable { .. } => "enumerated_table",
            VariationalState::BernoulliMeanField { .. } => "bernoulli_mean_field",
            VariationalState::GaussianMoments { .. } => "gaussian_moments",
        }
    }

    /// Checks row normalization, probability ranges and covariance definiteness.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Domain(msg));
        match self {
            VariationalState::CategoricalTable { probs } | VariationalState::EnumeratedTable { probs } => {
                for (n, row) in probs.iter().enumerate() {
                    if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                        return bad(format!("row {n} has probabilities outside [0, 1]"));
                    }
                    let total: f64 = row.iter().sum();
                    if (total - 1.0).abs() > NORMALIZATION_TOL {
                        return bad(format!("row {n} sums to {total}"));
                    }
                }
            }
            VariationalState::BernoulliMeanField { probs } => {
                if probs.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
                    return bad("mean-field probabilities outside [0, 1]".into());
                }
            }
            VariationalState::GaussianMoments { means, covs } => {
                if means.len() != covs.len() {
                    return bad(format!("{} means but {} covariances", means.len(), covs.len()));
                }
                for (n, (m, c)) in means.iter().zip(covs).enumerate() {
                    if c.nrows() != m.len() || c.ncols() != m.len() {
                        return bad(format!("covariance {n} has wrong shape"));
                    }
                    if (c - c.transpose()).amax() > 1e-10 * c.amax().max(1.0) {
                        return bad(format!("covariance {n} is not symmetric"));
                    }
                    if c.clone().cholesky().is_none() {
                        return bad(format!("covariance {n} is not positive definite"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Average of the per-point distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregatedPosterior {
    Table { probs: Vec<f64> },
    /// First and second moments of the uniform mixture of Gaussians.
    GaussianMixtureMoments {
        mean: DVector<f64>,
        second_moment: DMatrix<f64>,
        components: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Standard,
    Pseudo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub elbo: f64,
    pub entropy_sum: f64,
    pub gap: f64,
    /// `gap / max(1, |elbo|)`.
    pub relative_gap: f64,
    pub variant: Variant,
}

impl ObjectiveReport {
    fn new(f1: f64, f2: f64, f3: f64, entropy_sum: f64, variant: Variant) -> Self {
        let elbo = f1 - f2 - f3;
        let gap = (elbo - entropy_sum).abs();
        ObjectiveReport {
            f1,
            f2,
            f3,
            elbo,
            entropy_sum,
            gap,
            relative_gap: gap / elbo.abs().max(1.0),
            variant,
        }
    }
}

/// Pairwise summation in index order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        pairwise_sum(values) / values.len() as f64
    }
}

fn weighted(q: f64, v: f64) -> f64 {
    if q == 0.0 {
        0.0
    } else {
        q * v
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Quantities of a finite-state model that do not depend on the data.
pub(crate) struct StateCache {
    pub log_prior: Vec<f64>,
    pub eta: Vec<NaturalParams>,
    pub log_partition: Vec<f64>,
    pub noise: Family,
}

impl StateCache {
    pub fn new(model: &GenerativeModel, states: &[Vec<f64>]) -> Result<Self> {
        let noise = model.noise().family;
        let zeta = model.zeta(model.psi())?;
        let prior = model.prior().family;
        let mut log_prior = Vec::with_capacity(states.len());
        let mut eta = Vec::with_capacity(states.len());
        let mut log_partition = Vec::with_capacity(states.len());
        for z in states {
            log_prior.push(prior.log_density(&zeta, z)?);
            let e = model.eta(z, model.theta())?;
            log_partition.push(noise.log_partition(&e)?);
            eta.push(e);
        }
        Ok(StateCache {
            log_prior,
            eta,
            log_partition,
            noise,
        })
    }

    /// `log p(x|z_s) - log h(x)` for every state, given `T(x)`.
    pub fn log_lik_without_base(&self, stats: &[f64]) -> Vec<f64> {
        self.eta
            .iter()
            .zip(&self.log_partition)
            .map(|(e, a)| e.iter().zip(stats).map(|(e, t)| e * t).sum::<f64>() - a)
            .collect()
    }
}

/// Sufficient statistics and log base measure of every observation.
pub(crate) fn data_features(family: &Family, data: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, f64)>> {
    data.par_iter()
        .map(|x| {
            let t = family.sufficient_stats(x)?.into_vec();
            Ok((t, family.log_base_measure(x)?))
        })
        .collect()
}

fn check_data(model: &GenerativeModel, data: &[Vec<f64>]) -> Result<()> {
    let family = model.noise().family;
    data.iter().try_for_each(|x| family.check_support(x))
}

fn finite_states(model: &GenerativeModel) -> Option<&[Vec<f64>]> {
    model.latent_support().states()
}

/// The state as a table over the model's enumerated latent states.
fn as_table(model: &GenerativeModel, q: &VariationalState) -> Result<Vec<Vec<f64>>> {
    let states = finite_states(model).ok_or_else(|| {
        Error::Incompatible(format!(
            "{} state needs a model with finite latent support",
            q.kind_name()
        ))
    })?;
    match q {
        VariationalState::CategoricalTable { probs } | VariationalState::EnumeratedTable { probs } => {
            if let Some(row) = probs.iter().find(|row| row.len() != states.len()) {
                return Err(Error::Incompatible(format!(
                    "table row has {} entries, model has {} latent states",
                    row.len(),
                    states.len()
                )));
            }
            Ok(probs.clone())
        }
        VariationalState::BernoulliMeanField { probs } => {
            let h = states.first().map_or(0, Vec::len);
            if !matches!(model.prior().family, Family::BernoulliProduct { .. }) {
                return Err(Error::Incompatible("mean-field state needs binary latents".into()));
            }
            if let Some(row) = probs.iter().find(|row| row.len() != h) {
                return Err(Error::Incompatible(format!(
                    "mean-field row has {} entries, model has {h} latents",
                    row.len()
                )));
            }
            Ok(probs
                .iter()
                .map(|m| {
                    states
                        .iter()
                        .map(|z| {
                            z.iter()
                                .zip(m)
                                .map(|(&b, &p)| if b > 0.5 { p } else { 1.0 - p })
                                .product()
                        })
                        .collect()
                })
                .collect())
        }
        VariationalState::GaussianMoments { .. } => Err(Error::Incompatible(
            "gaussian_moments state needs a linear-Gaussian model".into(),
        )),
    }
}

fn gaussian_parts<'a>(
    model: &GenerativeModel,
    q: &'a VariationalState,
) -> Result<(LinearGaussian, &'a [DVector<f64>], &'a [DMatrix<f64>])> {
    let lg = model.linear_gaussian().ok_or_else(|| {
        Error::Incompatible(format!("{} state does not fit a {:?} model", q.kind_name(), model.kind()))
    })?;
    match q {
        VariationalState::GaussianMoments { means, covs } => {
            let h = lg.weights.ncols();
            if means.iter().any(|m| m.len() != h) {
                return Err(Error::Incompatible(format!("posterior means must have dimension {h}")));
            }
            Ok((lg, means, covs))
        }
        _ => Err(Error::Incompatible(format!(
            "{} state does not fit a linear-Gaussian model",
            q.kind_name()
        ))),
    }
}

fn check_lengths(data: &[Vec<f64>], q: &VariationalState) -> Result<()> {
    if data.len() != q.len() {
        return Err(Error::Incompatible(format!(
            "{} data points but {} variational rows",
            data.len(),
            q.len()
        )));
    }
    Ok(())
}

fn gaussian_entropy(cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(0.5 * (cov.nrows() as f64 * (1.0 + LN_2PI) + log_det))
}

fn noise_entropies(model: &GenerativeModel, states: &[Vec<f64>], variant: Variant) -> Result<Vec<f64>> {
    let noise = model.noise().family;
    states
        .iter()
        .map(|z| {
            let eta = model.eta(z, model.theta())?;
            match variant {
                Variant::Standard => noise.entropy(&noise.from_natural(&eta)?),
                Variant::Pseudo => noise.pseudo_entropy(&eta),
            }
        })
        .collect()
}

fn prior_entropy(model: &GenerativeModel, variant: Variant) -> Result<f64> {
    let prior = model.prior().family;
    let zeta = model.zeta(model.psi())?;
    match variant {
        Variant::Standard => prior.entropy(&prior.from_natural(&zeta)?),
        Variant::Pseudo => prior.pseudo_entropy(&zeta),
    }
}

fn finite_terms(
    model: &GenerativeModel,
    data: &[Vec<f64>],
    table: &[Vec<f64>],
    variant: Variant,
) -> Result<(f64, f64, f64)> {
    let states = finite_states(model).expect("finite support");
    let cache = StateCache::new(model, states)?;
    let features = data_features(&cache.noise, data)?;
    let rows: Vec<(f64, f64, f64)> = features
        .par_iter()
        .zip(table.par_iter())
        .map(|((stats, log_h), q)| {
            let lik = cache.log_lik_without_base(stats);
            let base = if variant == Variant::Standard { *log_h } else { 0.0 };
            let f1 = -q.iter().map(|&p| x_ln_x(p)).sum::<f64>();
            let f2 = -q.iter().zip(&cache.log_prior).map(|(&p, &l)| weighted(p, l)).sum::<f64>();
            let f3 = -q.iter().zip(&lik).map(|(&p, &l)| weighted(p, l + base)).sum::<f64>();
            (f1, f2, f3)
        })
        .collect();
    let column = |k: usize| -> Vec<f64> {
        rows.iter()
            .map(|r| match k {
                0 => r.0,
                1 => r.1,
                _ => r.2,
            })
            .collect()
    };
    Ok((mean(&column(0)), mean(&column(1)), mean(&column(2))))
}

fn gaussian_terms(
    lg: &LinearGaussian,
    data: &[Vec<f64>],
    means: &[DVector<f64>],
    covs: &[DMatrix<f64>],
) -> Result<(f64, f64, f64)> {
    let h = lg.weights.ncols() as f64;
    let tau = lg.prior_var;
    let log_noise: f64 = lg.noise_vars.iter().map(|v| LN_2PI + v.ln()).sum();
    let rows: Vec<Result<(f64, f64, f64)>> = data
        .par_iter()
        .zip(means.par_iter().zip(covs.par_iter()))
        .map(|(x, (m, s))| {
            let f1 = gaussian_entropy(s)?;
            let f2 = 0.5 * h * (LN_2PI + tau.ln()) + (m.norm_squared() + s.trace()) / (2.0 * tau);
            let residual = DVector::from_column_slice(x) - &lg.weights * m - &lg.offset;
            let spread = &lg.weights * s * lg.weights.transpose();
            let quad: f64 = (0..residual.len())
                .map(|d| (residual[d] * residual[d] + spread[(d, d)]) / lg.noise_vars[d])
                .sum();
            Ok((f1, f2, 0.5 * (log_noise + quad)))
        })
        .collect();
    let rows: Vec<(f64, f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
    let col = |f: fn(&(f64, f64, f64)) -> f64| mean(&rows.iter().map(f).collect::<Vec<_>>());
    Ok((col(|r| r.0), col(|r| r.1), col(|r| r.2)))
}

fn terms(
    model: &GenerativeModel,
    data: &[Vec<f64>],
    q: &VariationalState,
    variant: Variant,
) -> Result<(f64, f64, f64)> {
    check_lengths(data, q)?;
    check_data(model, data)?;
    q.validate()?;
    match q {
        VariationalState::GaussianMoments { .. } => {
            let (lg, means, covs) = gaussian_parts(model, q)?;
            gaussian_terms(&lg, data, means, covs)
        }
        _ => {
            let table = as_table(model, q)?;
            finite_terms(model, data, &table, variant)
        }
    }
}

fn entropy_sum(model: &GenerativeModel, q: &VariationalState, variant: Variant) -> Result<f64> {
    q.validate()?;
    match q {
        VariationalState::GaussianMoments { .. } => {
            let (lg, _, covs) = gaussian_parts(model, q)?;
            let h = lg.weights.ncols() as f64;
            let q_entropy = covs.iter().map(gaussian_entropy).collect::<Result<Vec<_>>>()?;
            let prior = 0.5 * h * (1.0 + LN_2PI + lg.prior_var.ln());
            let noise: f64 = lg.noise_vars.iter().map(|v| 0.5 * (1.0 + LN_2PI + v.ln())).sum();
            Ok(mean(&q_entropy) - prior - noise)
        }
        _ => {
            let table = as_table(model, q)?;
            let states = finite_states(model).expect("finite support");
            let q_entropy: Vec<f64> = table
                .iter()
                .map(|row| -row.iter().map(|&p| x_ln_x(p)).sum::<f64>())
                .collect();
            let q_bar = column_means(&table, states.len());
            let noise = noise_entropies(model, states, variant)?;
            let expected_noise: f64 = q_bar.iter().zip(&noise).map(|(&p, &h)| weighted(p, h)).sum();
            Ok(mean(&q_entropy) - prior_entropy(model, variant)? - expected_noise)
        }
    }
}

fn column_means(table: &[Vec<f64>], width: usize) -> Vec<f64> {
    (0..width)
        .map(|s| mean(&table.iter().map(|row| row[s]).collect::<Vec<_>>()))
        .collect()
}

/// Standard three-term ELBO with the entropy-sum right-hand side.
pub fn elbo_terms(model: &GenerativeModel, data: &[Vec<f64>], q: &VariationalState) -> Result<ObjectiveReport> {
    let (f1, f2, f3) = terms(model, data, q, Variant::Standard)?;
    Ok(ObjectiveReport::new(f1, f2, f3, entropy_sum(model, q, Variant::Standard)?, Variant::Standard))
}

/// Pseudo ELBO, where the noise log-density omits `log h(x)`.
pub fn pseudo_elbo_terms(
    model: &GenerativeModel,
    data: &[Vec<f64>],
    q: &VariationalState,
) -> Result<ObjectiveReport> {
    let (f1, f2, f3) = terms(model, data, q, Variant::Pseudo)?;
    Ok(ObjectiveReport::new(f1, f2, f3, entropy_sum(model, q, Variant::Pseudo)?, Variant::Pseudo))
}

/// `(1/N) Σ H[q] - H[prior] - E_q̄ H[p(x|z)]`.
pub fn entropy_sum_rhs(model: &GenerativeModel, q: &VariationalState) -> Result<f64> {
    entropy_sum(model, q, Variant::Standard)
}

/// Same as [`entropy_sum_rhs`] with pseudo entropies.
pub fn pseudo_entropy_sum_rhs(model: &GenerativeModel, q: &VariationalState) -> Result<f64> {
    entropy_sum(model, q, Variant::Pseudo)
}

/// Expected log-likelihood minus the average KL divergence to the prior.
pub fn elbo_kl_form(model: &GenerativeModel, data: &[Vec<f64>], q: &VariationalState) -> Result<f64> {
    check_lengths(data, q)?;
    check_data(model, data)?;
    q.validate()?;
    match q {
        VariationalState::GaussianMoments { .. } => {
            let (lg, means, covs) = gaussian_parts(model, q)?;
            let (_, _, f3) = gaussian_terms(&lg, data, means, covs)?;
            let h = lg.weights.ncols() as f64;
            let tau = lg.prior_var;
            let kl = means
                .iter()
                .zip(covs)
                .map(|(m, s)| {
                    let chol = s
                        .clone()
                        .cholesky()
                        .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?;
                    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                    Ok(0.5 * ((s.trace() + m.norm_squared()) / tau - h + h * tau.ln() - log_det))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(-f3 - mean(&kl))
        }
        _ => {
            let table = as_table(model, q)?;
            let states = finite_states(model).expect("finite support");
            let cache = StateCache::new(model, states)?;
            let features = data_features(&cache.noise, data)?;
            let rows: Vec<f64> = features
                .par_iter()
                .zip(table.par_iter())
                .map(|((stats, log_h), q)| {
                    let lik = cache.log_lik_without_base(stats);
                    let expected: f64 = q.iter().zip(&lik).map(|(&p, &l)| weighted(p, l + log_h)).sum();
                    let kl: f64 = q
                        .iter()
                        .zip(&cache.log_prior)
                        .map(|(&p, &lp)| if p == 0.0 { 0.0 } else { p * (p.ln() - lp) })
                        .sum();
                    expected - kl
                })
                .collect();
            Ok(mean(&rows))
        }
    }
}

/// Exact posteriors `p(z | x_n)` for every data point.
pub fn exact_posterior(model: &GenerativeModel, data: &[Vec<f64>]) -> Result<VariationalState> {
    check_data(model, data)?;
    if let Some(lg) = model.linear_gaussian() {
        let (_, cov) = lg.posterior(&vec![0.0; lg.offset.len()])?;
        let means = data
            .par_iter()
            .map(|x| lg.posterior(x).map(|(m, _)| m))
            .collect::<Result<Vec<_>>>()?;
        let covs = vec![cov; data.len()];
        return Ok(VariationalState::GaussianMoments { means, covs });
    }
    let states = match model.latent_support() {
        LatentSupport::FiniteStates(states) => states,
        LatentSupport::RealVector(_) => {
            return Err(Error::Unsupported(format!(
                "no exact posterior for {:?} models with continuous latents",
                model.kind()
            )))
        }
    };
    let cache = StateCache::new(model, states)?;
    let features = data_features(&cache.noise, data)?;
    let probs: Vec<Vec<f64>> = features
        .par_iter()
        .map(|(stats, _)| {
            let mut joint = cache.log_lik_without_base(stats);
            for (j, lp) in joint.iter_mut().zip(&cache.log_prior) {
                *j += lp;
            }
            let norm = log_sum_exp(&joint);
            joint.iter().map(|j| (j - norm).exp()).collect()
        })
        .collect();
    Ok(match model.kind() {
        crate::model::ModelKind::EfMixture => VariationalState::CategoricalTable { probs },
        _ => VariationalState::EnumeratedTable { probs },
    })
}

/// Exact average marginal log-likelihood `(1/N) Σ log p(x_n)`.
pub fn log_marginal_likelihood(model: &GenerativeModel, data: &[Vec<f64>]) -> Result<f64> {
    check_data(model, data)?;
    if let Some(lg) = model.linear_gaussian() {
        let cov = lg.marginal_covariance();
        let d = cov.nrows() as f64;
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Degenerate("marginal covariance not positive definite".into()))?;
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let rows: Vec<f64> = data
            .par_iter()
            .map(|x| {
                let centered = DVector::from_column_slice(x) - &lg.offset;
                let quad = centered.dot(&chol.solve(&centered));
                -0.5 * (d * LN_2PI + log_det + quad)
            })
            .collect();
        return Ok(mean(&rows));
    }
    let states = model.latent_support().states().ok_or_else(|| {
        Error::Unsupported(format!("no exact marginal likelihood for {:?} models", model.kind()))
    })?;
    let cache = StateCache::new(model, states)?;
    let features = data_features(&cache.noise, data)?;
    let rows: Vec<f64> = features
        .par_iter()
        .map(|(stats, log_h)| {
            let joint: Vec<f64> = cache
                .log_lik_without_base(stats)
                .iter()
                .zip(&cache.log_prior)
                .map(|(l, p)| l + p)
                .collect();
            log_sum_exp(&joint) + log_h
        })
        .collect();
    Ok(mean(&rows))
}

/// `L - (1/N) Σ log h(x_n)`.
pub fn pseudo_loglik(model: &GenerativeModel, data: &[Vec<f64>]) -> Result<f64> {
    let l = log_marginal_likelihood(model, data)?;
    Ok(l - mean_log_base_measure(&model.noise().family, data)?)
}

/// `(1/N) Σ log h(x_n)`.
pub fn mean_log_base_measure(family: &Family, data: &[Vec<f64>]) -> Result<f64> {
    if family.base_measure() == BaseMeasure::UnitConstant {
        return Ok(0.0);
    }
    let values = data
        .iter()
        .map(|x| family.log_base_measure(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&values))
}

/// `(|elbo - entropy_sum|, |pseudo_elbo - pseudo_entropy_sum|)`.
pub fn stationarity_gap(
    model: &GenerativeModel,
    data: &[Vec<f64>],
    q: &VariationalState,
) -> Result<(f64, f64)> {
    Ok((
        elbo_terms(model, data, q)?.gap,
        pseudo_elbo_terms(model, data, q)?.gap,
    ))
}

/// Average of the per-point variational distributions.
pub fn aggregated_posterior(model: &GenerativeModel, q: &VariationalState) -> Result<AggregatedPosterior> {
    q.validate()?;
    match q {
        VariationalState::GaussianMoments { means, covs } => {
            let h = gaussian_parts(model, q)?.0.weights.ncols();
            let n = means.len().max(1) as f64;
            let mut mean = DVector::zeros(h);
            let mut second = DMatrix::zeros(h, h);
            for (m, s) in means.iter().zip(covs) {
                mean += m;
                second += s + m * m.transpose();
            }
            Ok(AggregatedPosterior::GaussianMixtureMoments {
                mean: mean / n,
                second_moment: second / n,
                components: means.len(),
            })
        }
        _ => {
            let width = finite_states(model).map_or(0, <[Vec<f64>]>::len);
            Ok(AggregatedPosterior::Table {
                probs: column_means(&as_table(model, q)?, width),
            })
        }
    }
}
