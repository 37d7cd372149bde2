//! Training to stationary points: EM for mixtures, eigen and EM solutions for
//! p-PCA, exact-posterior coordinate ascent for SBNs.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::family::{sigmoid, softplus, Family};
use crate::model::{fd_step, make_ppca, GenerativeModel, ModelKind, Structure};
use crate::objective::{elbo_terms, exact_posterior, pseudo_elbo_terms, VariationalState};
use crate::special::{digamma, trigamma};

/// Name of the generator behind every seeded draw.
pub const RNG_ALGORITHM: &str = "chacha20";

const EMPTY_CLUSTER_MASS: f64 = 1e-12;
const GAMMA_NEWTON_MAX_ITERS: usize = 100;
const GAMMA_NEWTON_TOL: f64 = 1e-12;
const ARMIJO: f64 = 1e-4;
const SBN_NEWTON_MAX_ITERS: usize = 50;
const INIT_SMOOTHING: f64 = 0.1;
const KMEANS_ROUNDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub max_iters: usize,
    pub elbo_rel_tol: f64,
    pub grad_norm_tol: f64,
    pub seed: u64,
    pub record_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            max_iters: 5000,
            elbo_rel_tol: 1e-12,
            grad_norm_tol: 1e-7,
            seed: 0,
            record_every: 10,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(domain("max_iters must be at least 1"));
        }
        if !(self.elbo_rel_tol > 0.0) || !(self.grad_norm_tol > 0.0) {
            return Err(domain("tolerances must be positive"));
        }
        if self.record_every == 0 {
            return Err(domain("record_every must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub elbo: f64,
    pub entropy_sum: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub pseudo_elbo: f64,
    pub pseudo_entropy_sum: f64,
    pub pseudo_gap: f64,
    /// Finite-difference gradient norm; only evaluated on recorded
    /// iterations and once the ELBO has plateaued.
    pub grad_norm: Option<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub rng_algorithm: String,
}

impl TrainingTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_grad_norm(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.grad_norm)
    }
}

/// Model, exact posteriors and trace of a training run.
#[derive(Debug, Clone)]
pub struct Fit {
    pub model: GenerativeModel,
    pub posterior: VariationalState,
    pub trace: TrainingTrace,
}

fn elbo_value(model: &GenerativeModel, data: &[Vec<f64>], q: &VariationalState) -> Result<f64> {
    Ok(elbo_terms(model, data, q)?.elbo)
}

/// Euclidean norm of the central-difference ELBO gradient over every entry
/// of (Ψ, Θ), holding `q` fixed. Falls back to a one-sided difference when a
/// probe leaves the parameter domain.
pub fn grad_norm_all_params(model: &GenerativeModel, data: &[Vec<f64>], q: &VariationalState) -> Result<f64> {
    let psi = model.psi().to_vec();
    let theta = model.theta().to_vec();
    let base = elbo_value(model, data, q)?;
    let eval = |psi: Vec<f64>, theta: Vec<f64>| -> Option<f64> {
        model.with_params(psi, theta).ok().and_then(|m| elbo_value(&m, data, q).ok())
    };
    let mut sq = 0.0;
    for k in 0..psi.len() + theta.len() {
        let (in_psi, idx) = if k < psi.len() { (true, k) } else { (false, k - psi.len()) };
        let value = if in_psi { psi[idx] } else { theta[idx] };
        let h = fd_step(value);
        let probe = |delta: f64| {
            let (mut p, mut t) = (psi.clone(), theta.clone());
            if in_psi {
                p[idx] += delta;
            } else {
                t[idx] += delta;
            }
            eval(p, t)
        };
        let g = match (probe(h), probe(-h)) {
            (Some(up), Some(down)) => (up - down) / (2.0 * h),
            (Some(up), None) => (up - base) / h,
            (None, Some(down)) => (base - down) / h,
            (None, None) => {
                return Err(Error::Degenerate(format!("cannot probe parameter {k} inside its domain")))
            }
        };
        sq += g * g;
    }
    Ok(sq.sqrt())
}

/// Alternates exact E-steps with `m_step` until the ELBO plateaus and the
/// gradient norm drops below tolerance, or the iteration cap is hit.
fn run_em<M>(model: GenerativeModel, data: &[Vec<f64>], config: &TrainingConfig, mut m_step: M) -> Result<Fit>
where
    M: FnMut(&GenerativeModel, &VariationalState) -> Result<GenerativeModel>,
{
    config.validate()?;
    let start = Instant::now();
    let mut model = model;
    let mut records = Vec::new();
    let mut prev: Option<f64> = None;
    for it in 1..=config.max_iters {
        let q = exact_posterior(&model, data)?;
        let report = elbo_terms(&model, data, &q)?;
        let pseudo = pseudo_elbo_terms(&model, data, &q)?;
        let plateau = prev.is_some_and(|p| (report.elbo - p).abs() / report.elbo.abs().max(1.0) < config.elbo_rel_tol);
        let last = it == config.max_iters;
        let record = plateau || last || it == 1 || it % config.record_every == 0;
        let grad_norm = if record {
            Some(grad_norm_all_params(&model, data, &q)?)
        } else {
            None
        };
        if record {
            records.push(TraceRecord {
                iteration: it,
                elbo: report.elbo,
                entropy_sum: report.entropy_sum,
                gap: report.gap,
                relative_gap: report.relative_gap,
                pseudo_elbo: pseudo.elbo,
                pseudo_entropy_sum: pseudo.entropy_sum,
                pseudo_gap: pseudo.gap,
                grad_norm,
                wall_time: start.elapsed().as_secs_f64(),
            });
        }
        let converged = plateau && grad_norm.is_some_and(|g| g < config.grad_norm_tol);
        if converged || last {
            return Ok(Fit {
                model,
                posterior: q,
                trace: TrainingTrace {
                    records,
                    converged,
                    stop_reason: if converged { StopReason::Converged } else { StopReason::MaxIters },
                    iterations: it,
                    rng_algorithm: RNG_ALGORITHM.to_string(),
                },
            });
        }
        prev = Some(report.elbo);
        model = m_step(&model, &q)?;
    }
    unreachable!("max_iters >= 1 is validated")
}

fn table(q: &VariationalState) -> &[Vec<f64>] {
    match q {
        VariationalState::CategoricalTable { probs } | VariationalState::EnumeratedTable { probs } => probs,
        _ => panic!("exact posteriors of finite-state models are tables"),
    }
}

fn mixture_parts(model: &GenerativeModel) -> Result<(Family, usize)> {
    match model.structure() {
        Structure::Mixture { component, components } => Ok((*component, *components)),
        _ => Err(Error::Incompatible(format!("expected an EF mixture, got {:?}", model.kind()))),
    }
}

/// Weighted maximum-likelihood standard parameters of one component.
pub fn fit_component(family: &Family, data: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("component has no weight".into()));
    }
    let weighted_mean = |f: &dyn Fn(&[f64]) -> f64| -> f64 {
        data.iter().zip(weights).map(|(x, w)| w * f(x)).sum::<f64>() / total
    };
    let dim = family.data_dim();
    let means = || -> Vec<f64> { (0..dim).map(|d| weighted_mean(&|x| x[d])).collect() };
    let params = match family {
        Family::BernoulliProduct { .. } | Family::PoissonProduct { .. } => means(),
        Family::Categorical { states } => (0..states - 1)
            .map(|c| weighted_mean(&|x| if x[0] as usize == c { 1.0 } else { 0.0 }))
            .collect(),
        Family::GaussianScalarVar { .. } => {
            let mu = means();
            let var = weighted_mean(&|x| x.iter().zip(&mu).map(|(a, m)| (a - m) * (a - m)).sum::<f64>()) / dim as f64;
            let mut p = mu;
            p.push(var);
            p
        }
        Family::GaussianDiagCov { .. } => {
            let mu = means();
            let vars: Vec<f64> = (0..dim).map(|d| weighted_mean(&|x| (x[d] - mu[d]) * (x[d] - mu[d]))).collect();
            mu.into_iter().chain(vars).collect()
        }
        Family::Gamma => {
            let mean = weighted_mean(&|x| x[0]);
            let mean_log = weighted_mean(&|x| x[0].ln());
            let alpha = gamma_shape(mean.ln() - mean_log)?;
            vec![alpha, alpha / mean]
        }
    };
    family.check_standard(&params).map_err(|e| Error::Degenerate(format!("M-step left the domain: {e}")))?;
    Ok(params)
}

/// Solves `ln α - ψ(α) = s` by Newton's method from Minka's starting point.
pub fn gamma_shape(s: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Degenerate(format!(
            "gamma shape equation needs log(mean) - mean(log) > 0, got {s}"
        )));
    }
    let mut alpha = (3.0 - s + ((s - 3.0) * (s - 3.0) + 24.0 * s).sqrt()) / (12.0 * s);
    for _ in 0..GAMMA_NEWTON_MAX_ITERS {
        let f = alpha.ln() - digamma(alpha)? - s;
        let fp = 1.0 / alpha - trigamma(alpha)?;
        let mut next = alpha - f / fp;
        if !(next > 0.0) {
            next = 0.5 * alpha;
        }
        let delta = (next - alpha).abs();
        alpha = next;
        if delta < GAMMA_NEWTON_TOL * alpha.max(1.0) {
            return Ok(alpha);
        }
    }
    Err(Error::NewtonNonConvergence {
        what: "gamma shape",
        iterations: GAMMA_NEWTON_MAX_ITERS,
    })
}

/// One M-step for an EF mixture given responsibilities.
pub fn mixture_m_step(model: &GenerativeModel, data: &[Vec<f64>], probs: &[Vec<f64>]) -> Result<GenerativeModel> {
    let (family, c) = mixture_parts(model)?;
    let n = data.len() as f64;
    let mut weights = Vec::with_capacity(c);
    let mut theta = Vec::with_capacity(c * family.natural_dim());
    for k in 0..c {
        let column: Vec<f64> = probs.iter().map(|row| row[k]).collect();
        let mass: f64 = column.iter().sum();
        if mass < EMPTY_CLUSTER_MASS {
            return Err(Error::EmptyCluster { component: k, mass });
        }
        weights.push(mass / n);
        theta.extend(fit_component(&family, data, &column)?);
    }
    model.with_params(weights[..c - 1].to_vec(), theta)
}

fn standardized_stats(family: &Family, data: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let stats: Vec<Vec<f64>> = data
        .iter()
        .map(|x| family.sufficient_stats(x).map(|t| t.into_vec()))
        .collect::<Result<_>>()?;
    let dim = stats.first().map_or(0, Vec::len);
    let n = stats.len() as f64;
    let mut out = stats.clone();
    for k in 0..dim {
        let mean = stats.iter().map(|t| t[k]).sum::<f64>() / n;
        let var = stats.iter().map(|t| (t[k] - mean) * (t[k] - mean)).sum::<f64>() / n;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        for row in &mut out {
            row[k] = (row[k] - mean) / scale;
        }
    }
    Ok(out)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding plus a few Lloyd rounds on standardized sufficient
/// statistics, smoothed into soft responsibilities.
pub fn kmeans_responsibilities<R: Rng + ?Sized>(
    family: &Family,
    data: &[Vec<f64>],
    components: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if data.is_empty() {
        return Err(domain("cannot initialize a mixture from an empty dataset"));
    }
    let points = standardized_stats(family, data)?;
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    while centers.len() < components {
        let dist: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            dist.iter()
                .position(|d| {
                    u -= d;
                    u <= 0.0
                })
                .unwrap_or(points.len() - 1)
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[pick].clone());
    }
    let nearest = |p: &[f64], centers: &[Vec<f64>]| -> usize {
        (0..centers.len())
            .min_by(|&a, &b| sq_dist(p, &centers[a]).total_cmp(&sq_dist(p, &centers[b])))
            .expect("at least one center")
    };
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..KMEANS_ROUNDS {
        for (k, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == k).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for (j, c) in center.iter_mut().enumerate() {
                *c = members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64;
            }
        }
        labels = points.iter().map(|p| nearest(p, &centers)).collect();
    }
    let floor = INIT_SMOOTHING / components as f64;
    Ok(labels
        .iter()
        .map(|&l| {
            (0..components)
                .map(|k| if k == l { 1.0 - INIT_SMOOTHING + floor } else { floor })
                .collect()
        })
        .collect())
}

/// EM for an EF mixture from a k-means++ initialization seeded by `config.seed`.
pub fn em_mixture(model: &GenerativeModel, data: &[Vec<f64>], config: &TrainingConfig) -> Result<Fit> {
    let (family, c) = mixture_parts(model)?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let init = kmeans_responsibilities(&family, data, c, &mut rng)?;
    let start = mixture_m_step(model, data, &init)?;
    em_mixture_from(&start, data, config)
}

/// EM for an EF mixture starting at the model's own parameters.
pub fn em_mixture_from(model: &GenerativeModel, data: &[Vec<f64>], config: &TrainingConfig) -> Result<Fit> {
    mixture_parts(model)?;
    run_em(model.clone(), data, config, |m, q| mixture_m_step(m, data, table(q)))
}

/// Sample mean and biased (1/N) covariance.
pub fn sample_moments(data: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = data.len();
    let d = data.first().map_or(0, Vec::len);
    if n == 0 || d == 0 {
        return Err(domain("sample moments need a non-empty dataset"));
    }
    let mut mean = DVector::zeros(d);
    for x in data {
        mean += DVector::from_column_slice(x);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for x in data {
        let c = DVector::from_column_slice(x) - &mean;
        cov += &c * c.transpose();
    }
    cov /= n as f64;
    Ok((mean, cov))
}

/// `-½ log det(WᵀW/σ² + I) - (D/2) log(2πeσ²)`.
pub fn ppca_stationary_loglik(weights: &DMatrix<f64>, noise_var: f64) -> Result<f64> {
    let (d, h) = weights.shape();
    let m = weights.transpose() * weights / noise_var + DMatrix::identity(h, h);
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Degenerate("WᵀW/σ² + I not positive definite".into()))?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(-0.5 * log_det - 0.5 * d as f64 * (2.0 * std::f64::consts::PI * std::f64::consts::E * noise_var).ln())
}

#[derive(Debug, Clone)]
pub struct PpcaFit {
    pub eigen_model: GenerativeModel,
    pub eigen_posterior: VariationalState,
    pub em: Fit,
}

/// Eigendecomposition maximum-likelihood p-PCA: σ² is the mean of the
/// discarded eigenvalues and `W = U_H (Λ_H - σ² I)^½`.
pub fn ppca_eigen_solution(data: &[Vec<f64>], latent_dim: usize) -> Result<GenerativeModel> {
    let (mean, cov) = sample_moments(data)?;
    let d = mean.len();
    if latent_dim == 0 || latent_dim >= d {
        return Err(Error::Degenerate(format!(
            "p-PCA needs 1 <= H < D, got H={latent_dim}, D={d}"
        )));
    }
    if data.len() <= d {
        return Err(Error::Degenerate(format!("p-PCA needs N > D, got N={}", data.len())));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let noise_var = values[latent_dim..].iter().sum::<f64>() / (d - latent_dim) as f64;
    if !(noise_var > 0.0) || values[latent_dim - 1] <= noise_var {
        return Err(Error::Degenerate(format!(
            "sample covariance has rank below H={latent_dim} (eigenvalues {values:?})"
        )));
    }
    let mut weights = DMatrix::zeros(d, latent_dim);
    for (col, &i) in order.iter().take(latent_dim).enumerate() {
        let scale = (values[col] - noise_var).sqrt();
        weights.set_column(col, &(eig.eigenvectors.column(i) * scale));
    }
    make_ppca(&weights, &mean, noise_var, 1.0)
}

fn ppca_m_step(model: &GenerativeModel, cov: &DMatrix<f64>) -> Result<GenerativeModel> {
    let lg = model.linear_gaussian().expect("p-PCA model");
    let (d, h) = lg.weights.shape();
    let w = &lg.weights;
    let var = lg.noise_vars[0];
    let m = w.transpose() * w + DMatrix::identity(h, h) * var;
    let m_inv = m
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("WᵀW + σ²I is singular".into()))?;
    let sw = cov * w;
    let inner = DMatrix::identity(h, h) * var + &m_inv * w.transpose() * &sw;
    let inner_inv = inner
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("p-PCA M-step system is singular".into()))?;
    let w_new = &sw * inner_inv;
    let next_var = (cov - &sw * &m_inv * w_new.transpose()).trace() / d as f64;
    make_ppca(&w_new, &lg.offset, next_var, lg.prior_var)
}

/// Both the eigen solution and an EM fit from a random start.
pub fn fit_ppca(data: &[Vec<f64>], latent_dim: usize, config: &TrainingConfig) -> Result<PpcaFit> {
    let eigen_model = ppca_eigen_solution(data, latent_dim)?;
    let eigen_posterior = exact_posterior(&eigen_model, data)?;
    let (mean, cov) = sample_moments(data)?;
    let d = mean.len();
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let scale = (cov.trace() / d as f64).sqrt();
    let w0 = DMatrix::from_fn(d, latent_dim, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    let start = make_ppca(&w0, &mean, cov.trace() / d as f64, 1.0)?;
    let em = run_em(start, data, config, |m, _| ppca_m_step(m, &cov))?;
    Ok(PpcaFit {
        eigen_model,
        eigen_posterior,
        em,
    })
}

/// Random SBN start: `W ~ N(0, 0.1²)`, logit(π) ~ U(-1, 1), zero offsets.
pub fn sbn_random_init<R: Rng + ?Sized>(model: &GenerativeModel, rng: &mut R) -> Result<GenerativeModel> {
    let parts = model
        .sbn_parts()
        .ok_or_else(|| Error::Incompatible(format!("expected an SBN, got {:?}", model.kind())))?;
    let priors: Vec<f64> = parts.priors.iter().map(|_| sigmoid(rng.random::<f64>() * 2.0 - 1.0)).collect();
    let mut theta: Vec<f64> = parts
        .weights
        .iter()
        .map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    if let Some(offsets) = &parts.offsets {
        theta.extend(offsets.iter().map(|_| 0.0));
    }
    model.with_params(priors, theta)
}

fn logistic_objective(beta: &[f64], features: &[Vec<f64>], counts: &[f64], ones: &[f64]) -> f64 {
    features
        .iter()
        .zip(counts.iter().zip(ones))
        .map(|(f, (&c, &y))| {
            let a: f64 = f.iter().zip(beta).map(|(f, b)| f * b).sum();
            y * a - c * softplus(a)
        })
        .sum()
}

/// Maximizes `Σ_s y_s a_s - c_s softplus(a_s)`, `a_s = βᵀ f_s`, by Newton
/// steps with Armijo backtracking.
fn weighted_logistic(beta: &mut [f64], features: &[Vec<f64>], counts: &[f64], ones: &[f64]) {
    let p = beta.len();
    let scale = counts.iter().sum::<f64>().max(1.0);
    for _ in 0..SBN_NEWTON_MAX_ITERS {
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        for (f, (&c, &y)) in features.iter().zip(counts.iter().zip(ones)) {
            let a: f64 = f.iter().zip(beta.iter()).map(|(f, b)| f * b).sum();
            let s = sigmoid(a);
            let fv = DVector::from_column_slice(f);
            grad += &fv * (y - c * s);
            hess += &fv * fv.transpose() * (c * s * (1.0 - s));
        }
        if grad.amax() < 1e-14 * scale {
            return;
        }
        let ridge = 1e-12 * hess.trace().max(1e-300);
        let step = (hess.clone() + DMatrix::identity(p, p) * ridge)
            .cholesky()
            .map(|c| c.solve(&grad))
            .unwrap_or_else(|| grad.clone());
        let slope = grad.dot(&step);
        if !(slope > 0.0) {
            return;
        }
        let current = logistic_objective(beta, features, counts, ones);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            if logistic_objective(&trial, features, counts, ones) >= current + ARMIJO * t * slope {
                beta.copy_from_slice(&trial);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return;
        }
    }
}

/// Exact M-step of an SBN given enumerated posteriors: closed-form priors,
/// one weighted logistic regression per observable.
pub fn sbn_m_step(model: &GenerativeModel, data: &[Vec<f64>], probs: &[Vec<f64>]) -> Result<GenerativeModel> {
    let parts = model
        .sbn_parts()
        .ok_or_else(|| Error::Incompatible(format!("expected an SBN, got {:?}", model.kind())))?;
    let states = model.latent_support().states().expect("SBN states are enumerated");
    let (d, h) = parts.weights.shape();
    let n = data.len() as f64;
    let mut counts = vec![0.0; states.len()];
    let mut ones = vec![vec![0.0; states.len()]; d];
    for (x, row) in data.iter().zip(probs) {
        for (s, &q) in row.iter().enumerate() {
            counts[s] += q;
            for (dd, &xd) in x.iter().enumerate() {
                ones[dd][s] += q * xd;
            }
        }
    }
    let priors: Vec<f64> = (0..h)
        .map(|k| states.iter().zip(&counts).map(|(z, c)| c * z[k]).sum::<f64>() / n)
        .collect();
    let with_offsets = parts.offsets.is_some();
    let features: Vec<Vec<f64>> = states
        .iter()
        .map(|z| {
            let mut f = z.clone();
            if with_offsets {
                f.push(1.0);
            }
            f
        })
        .collect();
    let mut weights = parts.weights.clone();
    let mut offsets = parts.offsets.clone().unwrap_or_default();
    for dd in 0..d {
        let mut beta: Vec<f64> = weights.row(dd).iter().copied().collect();
        if with_offsets {
            beta.push(offsets[dd]);
        }
        weighted_logistic(&mut beta, &features, &counts, &ones[dd]);
        for k in 0..h {
            weights[(dd, k)] = beta[k];
        }
        if with_offsets {
            offsets[dd] = beta[h];
        }
    }
    let mut theta: Vec<f64> = weights.iter().copied().collect();
    theta.extend(offsets);
    model.with_params(priors, theta)
}

/// SBN training from a random start seeded by `config.seed`.
pub fn fit_sbn(model: &GenerativeModel, data: &[Vec<f64>], config: &TrainingConfig) -> Result<Fit> {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let start = sbn_random_init(model, &mut rng)?;
    fit_sbn_from(&start, data, config)
}

/// SBN training starting at the model's own parameters.
pub fn fit_sbn_from(model: &GenerativeModel, data: &[Vec<f64>], config: &TrainingConfig) -> Result<Fit> {
    if model.kind() != ModelKind::Sbn {
        return Err(Error::Incompatible(format!("expected an SBN, got {:?}", model.kind())));
    }
    run_em(model.clone(), data, config, |m, q| sbn_m_step(m, data, table(q)))
}
