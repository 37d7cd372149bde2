//! Generative models built from a prior family with map ζ(Ψ) and a noise
//! family with map η(z; Θ).
//!
//! Parameter vector layouts:
//!
//! * mixture: `Ψ = (π_1..π_{C-1})`, `Θ = (Θ_1, .., Θ_C)` with each `Θ_c` the
//!   component family's standard parameters;
//! * p-PCA: `Ψ = (τ)`, `Θ = (W row-major, μ, σ²)`, prior `N(0, τ I)`;
//! * simple FA: `Ψ = (τ̃)`, `Θ = (σ̃_1..σ̃_D, W row-major)`, noise
//!   `N(Wz, diag σ̃)`, unit-norm columns of `W`;
//! * SBN: `Ψ = π`, `Θ = (w_1, .., w_H, μ)` with `w_h` the h-th column of `W`;
//! * rigid SBN: `Ψ = (π)`, `Θ = (v)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::family::{Family, NaturalParams, StandardParams};

/// Largest SBN latent dimension; 2^H states are enumerated exactly.
pub const SBN_MAX_LATENTS: usize = 14;

/// Relative step for central finite differences.
pub const FD_RELATIVE_STEP: f64 = 1e-6;

pub(crate) fn fd_step(value: f64) -> f64 {
    FD_RELATIVE_STEP * value.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    EfMixture,
    Ppca,
    SimpleFa,
    Sbn,
    RigidSbn,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LatentSupport {
    FiniteStates(Vec<Vec<f64>>),
    RealVector(usize),
}

impl LatentSupport {
    pub fn states(&self) -> Option<&[Vec<f64>]> {
        match self {
            LatentSupport::FiniteStates(states) => Some(states),
            LatentSupport::RealVector(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub family: Family,
    /// Prior parameters Ψ.
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub family: Family,
    /// Noise parameters Θ.
    pub params: Vec<f64>,
    /// Indices into Θ spanning the η-Jacobian.
    pub theta_subset: Vec<usize>,
}

pub type ZetaMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type EtaMap = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// User-supplied parameter maps; Jacobians fall back to finite differences.
#[derive(Clone)]
pub struct CustomMaps {
    pub zeta: ZetaMap,
    pub eta: EtaMap,
}

impl fmt::Debug for CustomMaps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomMaps { .. }")
    }
}

#[derive(Debug, Clone)]
pub enum Structure {
    Mixture { component: Family, components: usize },
    Ppca { data_dim: usize, latent_dim: usize },
    SimpleFa { data_dim: usize, latent_dim: usize },
    Sbn {
        latent_dim: usize,
        data_dim: usize,
        offsets: bool,
    },
    RigidSbn,
    Custom(CustomMaps),
}

/// Linear-Gaussian view shared by p-PCA and simple FA:
/// `z ~ N(0, τ I)`, `x ~ N(Wz + μ, diag(noise_vars))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussian {
    pub weights: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub noise_vars: DVector<f64>,
    pub prior_var: f64,
}

impl LinearGaussian {
    /// Marginal covariance `τ W Wᵀ + diag(noise_vars)`.
    pub fn marginal_covariance(&self) -> DMatrix<f64> {
        let mut cov = &self.weights * self.weights.transpose() * self.prior_var;
        for d in 0..cov.nrows() {
            cov[(d, d)] += self.noise_vars[d];
        }
        cov
    }

    /// Exact posterior `N(m, S)` for one observation.
    pub fn posterior(&self, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let h = self.weights.ncols();
        let inv_noise = self.noise_vars.map(|v| 1.0 / v);
        let wt_inv = self.weights.transpose() * DMatrix::from_diagonal(&inv_noise);
        let mut precision = &wt_inv * &self.weights;
        for i in 0..h {
            precision[(i, i)] += 1.0 / self.prior_var;
        }
        let chol = precision
            .cholesky()
            .ok_or_else(|| Error::Degenerate("posterior precision not positive definite".into()))?;
        let cov = chol.inverse();
        let centered = DVector::from_column_slice(x) - &self.offset;
        let mean = &cov * (wt_inv * centered);
        Ok((mean, cov))
    }
}

/// A generative model with exponential-family prior and noise.
#[derive(Debug, Clone)]
pub struct GenerativeModel {
    structure: Structure,
    prior: PriorSpec,
    noise: NoiseSpec,
    latent: LatentSupport,
}

fn binary_states(h: usize) -> Vec<Vec<f64>> {
    (0..1usize << h)
        .map(|s| (0..h).map(|bit| ((s >> bit) & 1) as f64).collect())
        .collect()
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(domain(format!("{what} contains non-finite value {v}"))),
        None => Ok(()),
    }
}

fn check_len(values: &[f64], expected: usize, what: &str) -> Result<()> {
    if values.len() == expected {
        Ok(())
    } else {
        Err(domain(format!("{what} has length {}, expected {expected}", values.len())))
    }
}

/// EF mixture with `weights.len()` components of family `component`.
pub fn make_ef_mixture(
    component: Family,
    weights: &[f64],
    params: &[Vec<f64>],
) -> Result<GenerativeModel> {
    component.validate()?;
    let c = weights.len();
    if c == 0 || params.len() != c {
        return Err(domain(format!(
            "mixture needs matching non-empty weights and component params ({} vs {})",
            c,
            params.len()
        )));
    }
    if weights.iter().any(|&p| !(p > 0.0)) {
        return Err(domain(format!("mixture weights must be positive, got {weights:?}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(domain(format!("mixture weights sum to {total}, expected 1")));
    }
    let structure = Structure::Mixture {
        component,
        components: c,
    };
    let psi = weights[..c - 1].to_vec();
    let theta: Vec<f64> = params.iter().flatten().copied().collect();
    GenerativeModel::from_structure(structure, psi, theta)
}

/// Probabilistic PCA, `z ~ N(0, τ I_H)`, `x ~ N(Wz + μ, σ² I_D)`.
pub fn make_ppca(
    weights: &DMatrix<f64>,
    offset: &DVector<f64>,
    noise_var: f64,
    prior_var: f64,
) -> Result<GenerativeModel> {
    let (d, h) = weights.shape();
    if d == 0 || h == 0 || offset.len() != d {
        return Err(domain("p-PCA needs a non-empty D×H weight matrix and a length-D offset"));
    }
    let mut theta: Vec<f64> = Vec::with_capacity(d * h + d + 1);
    for row in 0..d {
        for col in 0..h {
            theta.push(weights[(row, col)]);
        }
    }
    theta.extend(offset.iter());
    theta.push(noise_var);
    GenerativeModel::from_structure(
        Structure::Ppca {
            data_dim: d,
            latent_dim: h,
        },
        vec![prior_var],
        theta,
    )
}

/// Factor analysis with prior `N(0, τ̃ I)` and noise `N(Wz, diag σ̃)`; the
/// columns of `W` must have unit Euclidean norm.
pub fn make_simple_fa(
    weights: &DMatrix<f64>,
    noise_vars: &[f64],
    prior_var: f64,
) -> Result<GenerativeModel> {
    let (d, h) = weights.shape();
    if d == 0 || h == 0 || noise_vars.len() != d {
        return Err(domain("simple FA needs a D×H weight matrix and D noise variances"));
    }
    for (col, column) in weights.column_iter().enumerate() {
        let norm = column.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(domain(format!("simple FA column {col} has norm {norm}, expected 1")));
        }
    }
    let mut theta = noise_vars.to_vec();
    for row in 0..d {
        for col in 0..h {
            theta.push(weights[(row, col)]);
        }
    }
    GenerativeModel::from_structure(
        Structure::SimpleFa {
            data_dim: d,
            latent_dim: h,
        },
        vec![prior_var],
        theta,
    )
}

/// Sigmoid belief net with `H = priors.len()` binary latents.
pub fn make_sbn(priors: &[f64], weights: &DMatrix<f64>, offset: &[f64]) -> Result<GenerativeModel> {
    if offset.len() != weights.nrows() {
        return Err(domain("SBN needs H priors, a D×H weight matrix and D offsets"));
    }
    build_sbn(priors, weights, Some(offset))
}

/// SBN without offsets, `η(z) = W z`. With `H = 1`, `D = 2` this is the
/// two-observable example `η(z; v, w) = (v z, w z)`.
pub fn make_sbn_without_offsets(priors: &[f64], weights: &DMatrix<f64>) -> Result<GenerativeModel> {
    build_sbn(priors, weights, None)
}

/// `z ~ Bern(π)`, `x_1 ~ Bern(S(v z))`, `x_2 ~ Bern(S(w z))`.
pub fn make_simple_sbn(prior: f64, v: f64, w: f64) -> Result<GenerativeModel> {
    make_sbn_without_offsets(&[prior], &DMatrix::from_column_slice(2, 1, &[v, w]))
}

fn build_sbn(priors: &[f64], weights: &DMatrix<f64>, offset: Option<&[f64]>) -> Result<GenerativeModel> {
    let h = priors.len();
    let (d, wh) = weights.shape();
    if h == 0 || wh != h || d == 0 {
        return Err(domain("SBN needs H priors and a D×H weight matrix"));
    }
    if h > SBN_MAX_LATENTS {
        return Err(domain(format!(
            "SBN with H={h} exceeds the enumeration cap of {SBN_MAX_LATENTS}"
        )));
    }
    let mut theta: Vec<f64> = weights.iter().copied().collect(); // column-major = w_1, .., w_H
    theta.extend_from_slice(offset.unwrap_or(&[]));
    GenerativeModel::from_structure(
        Structure::Sbn {
            latent_dim: h,
            data_dim: d,
            offsets: offset.is_some(),
        },
        priors.to_vec(),
        theta,
    )
}

/// The rigid SBN with `η(z; v) = (v z, (v + 1) z)`.
pub fn make_rigid_sbn(prior: f64, v: f64) -> Result<GenerativeModel> {
    GenerativeModel::from_structure(Structure::RigidSbn, vec![prior], vec![v])
}

/// A model with arbitrary maps; Jacobians are taken by finite differences.
pub fn make_custom(
    prior: PriorSpec,
    noise: NoiseSpec,
    latent: LatentSupport,
    maps: CustomMaps,
) -> Result<GenerativeModel> {
    prior.family.validate()?;
    noise.family.validate()?;
    let model = GenerativeModel {
        structure: Structure::Custom(maps),
        prior,
        noise,
        latent,
    };
    model.validate()?;
    Ok(model)
}

impl GenerativeModel {
    fn from_structure(structure: Structure, psi: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        let (prior_family, noise_family, latent, subset) = match structure {
            Structure::Mixture {
                component,
                components,
            } => (
                Family::Categorical { states: components },
                component,
                LatentSupport::FiniteStates((0..components).map(|c| vec![c as f64]).collect()),
                (0..components * component.natural_dim()).collect(),
            ),
            Structure::Ppca {
                data_dim,
                latent_dim,
            } => (
                Family::GaussianScalarVar { dim: latent_dim },
                Family::GaussianScalarVar { dim: data_dim },
                LatentSupport::RealVector(latent_dim),
                vec![data_dim * latent_dim + data_dim],
            ),
            Structure::SimpleFa {
                data_dim,
                latent_dim,
            } => (
                Family::GaussianScalarVar { dim: latent_dim },
                Family::GaussianDiagCov { dim: data_dim },
                LatentSupport::RealVector(latent_dim),
                (0..data_dim).collect(),
            ),
            Structure::Sbn {
                latent_dim,
                data_dim,
                offsets,
            } => (
                Family::BernoulliProduct { dim: latent_dim },
                Family::BernoulliProduct { dim: data_dim },
                LatentSupport::FiniteStates(binary_states(latent_dim)),
                (0..latent_dim * data_dim + if offsets { data_dim } else { 0 }).collect(),
            ),
            Structure::RigidSbn => (
                Family::BernoulliProduct { dim: 1 },
                Family::BernoulliProduct { dim: 2 },
                LatentSupport::FiniteStates(binary_states(1)),
                vec![0],
            ),
            Structure::Custom(_) => unreachable!("custom models are built by make_custom"),
        };
        let model = GenerativeModel {
            structure,
            prior: PriorSpec {
                family: prior_family,
                params: psi,
            },
            noise: NoiseSpec {
                family: noise_family,
                params: theta,
                theta_subset: subset,
            },
            latent,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn kind(&self) -> ModelKind {
        match self.structure {
            Structure::Mixture { .. } => ModelKind::EfMixture,
            Structure::Ppca { .. } => ModelKind::Ppca,
            Structure::SimpleFa { .. } => ModelKind::SimpleFa,
            Structure::Sbn { .. } => ModelKind::Sbn,
            Structure::RigidSbn => ModelKind::RigidSbn,
            Structure::Custom(_) => ModelKind::Custom,
        }
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn latent_support(&self) -> &LatentSupport {
        &self.latent
    }

    pub fn psi(&self) -> &[f64] {
        &self.prior.params
    }

    pub fn theta(&self) -> &[f64] {
        &self.noise.params
    }

    pub fn data_dim(&self) -> usize {
        self.noise.family.data_dim()
    }

    /// Same structure with new parameters, validated.
    pub fn with_params(&self, psi: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        let mut next = self.clone();
        next.prior.params = psi;
        next.noise.params = theta;
        next.validate()?;
        Ok(next)
    }

    fn validate(&self) -> Result<()> {
        let psi = self.psi();
        let theta = self.theta();
        check_finite(psi, "prior parameters")?;
        check_finite(theta, "noise parameters")?;
        match &self.structure {
            Structure::Mixture {
                component,
                components,
            } => {
                self.prior.family.check_standard(psi)?;
                let l = component.natural_dim();
                check_len(theta, components * l, "mixture parameters")?;
                for chunk in theta.chunks(l) {
                    component.check_standard(chunk)?;
                }
            }
            Structure::Ppca {
                data_dim,
                latent_dim,
            } => {
                check_len(psi, 1, "p-PCA prior parameters")?;
                check_len(theta, data_dim * latent_dim + data_dim + 1, "p-PCA parameters")?;
                if !(psi[0] > 0.0) {
                    return Err(domain(format!("prior variance must be positive, got {}", psi[0])));
                }
                let var = theta[theta.len() - 1];
                if !(var > 0.0) {
                    return Err(domain(format!("noise variance must be positive, got {var}")));
                }
            }
            Structure::SimpleFa {
                data_dim,
                latent_dim,
            } => {
                check_len(psi, 1, "FA prior parameters")?;
                check_len(theta, data_dim + data_dim * latent_dim, "FA parameters")?;
                if !(psi[0] > 0.0) {
                    return Err(domain(format!("prior variance must be positive, got {}", psi[0])));
                }
                if let Some(v) = theta[..*data_dim].iter().find(|v| !(**v > 0.0)) {
                    return Err(domain(format!("noise variances must be positive, got {v}")));
                }
            }
            Structure::Sbn {
                latent_dim,
                data_dim,
                offsets,
            } => {
                let expected = latent_dim * data_dim + if *offsets { *data_dim } else { 0 };
                check_len(theta, expected, "SBN parameters")?;
                self.prior.family.check_standard(psi)?;
            }
            Structure::RigidSbn => {
                check_len(theta, 1, "rigid SBN parameters")?;
                self.prior.family.check_standard(psi)?;
            }
            Structure::Custom(_) => {
                if self.noise.theta_subset.is_empty() {
                    return Err(domain("theta_subset must be non-empty"));
                }
                if let Some(i) = self.noise.theta_subset.iter().find(|&&i| i >= theta.len()) {
                    return Err(domain(format!("theta_subset index {i} out of range")));
                }
                let zeta = self.zeta(psi)?;
                self.prior.family.check_natural(&zeta)?;
            }
        }
        Ok(())
    }

    /// ζ(Ψ).
    pub fn zeta(&self, psi: &[f64]) -> Result<NaturalParams> {
        let n = match &self.structure {
            Structure::Mixture { .. } | Structure::Sbn { .. } | Structure::RigidSbn => {
                return self.prior.family.to_natural(&StandardParams::from(psi));
            }
            Structure::Ppca { latent_dim, .. } | Structure::SimpleFa { latent_dim, .. } => {
                let tau = psi[0];
                if !(tau > 0.0) {
                    return Err(domain(format!("prior variance must be positive, got {tau}")));
                }
                let mut n = vec![0.0; *latent_dim];
                n.push(-0.5 / tau);
                n
            }
            Structure::Custom(maps) => (maps.zeta)(psi),
        };
        Ok(NaturalParams(n))
    }

    /// η(z; Θ).
    pub fn eta(&self, z: &[f64], theta: &[f64]) -> Result<NaturalParams> {
        let n = match &self.structure {
            Structure::Mixture {
                component,
                components,
            } => {
                let c = z[0] as usize;
                if c >= *components {
                    return Err(domain(format!("mixture state {c} out of range")));
                }
                let l = component.natural_dim();
                return component.to_natural(&StandardParams::from(&theta[c * l..(c + 1) * l]));
            }
            Structure::Ppca {
                data_dim,
                latent_dim,
            } => {
                let (d, h) = (*data_dim, *latent_dim);
                let var = theta[d * h + d];
                let mut n: Vec<f64> = (0..d)
                    .map(|row| {
                        let mean = (0..h).map(|col| theta[row * h + col] * z[col]).sum::<f64>()
                            + theta[d * h + row];
                        mean / var
                    })
                    .collect();
                n.push(-0.5 / var);
                n
            }
            Structure::SimpleFa {
                data_dim,
                latent_dim,
            } => {
                let (d, h) = (*data_dim, *latent_dim);
                let vars = &theta[..d];
                let w = &theta[d..];
                let lin = (0..d).map(|row| {
                    (0..h).map(|col| w[row * h + col] * z[col]).sum::<f64>() / vars[row]
                });
                lin.chain(vars.iter().map(|v| -0.5 / v)).collect()
            }
            Structure::Sbn {
                latent_dim,
                data_dim,
                offsets,
            } => {
                let (h, d) = (*latent_dim, *data_dim);
                (0..d)
                    .map(|row| {
                        let offset = if *offsets { theta[h * d + row] } else { 0.0 };
                        (0..h).map(|col| theta[col * d + row] * z[col]).sum::<f64>() + offset
                    })
                    .collect()
            }
            Structure::RigidSbn => vec![theta[0] * z[0], (theta[0] + 1.0) * z[0]],
            Structure::Custom(maps) => (maps.eta)(z, theta),
        };
        Ok(NaturalParams(n))
    }

    /// Analytic `∂ζ/∂Ψᵀ` (K × R); finite differences for custom maps.
    pub fn jacobian_zeta(&self, psi: &[f64]) -> Result<DMatrix<f64>> {
        match &self.structure {
            Structure::Mixture { .. } | Structure::Sbn { .. } | Structure::RigidSbn => {
                self.prior.family.jacobian_to_natural(&StandardParams::from(psi))
            }
            Structure::Ppca { latent_dim, .. } | Structure::SimpleFa { latent_dim, .. } => {
                let tau = psi[0];
                let mut j = DMatrix::zeros(latent_dim + 1, 1);
                j[(*latent_dim, 0)] = 0.5 / (tau * tau);
                Ok(j)
            }
            Structure::Custom(_) => self.numeric_jacobian_zeta(psi),
        }
    }

    /// Analytic `∂η/∂θᵀ` (L × S) over `theta_subset`.
    pub fn jacobian_eta(&self, z: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        let l = self.noise.family.natural_dim();
        let s = self.noise.theta_subset.len();
        match &self.structure {
            Structure::Mixture {
                component,
                components,
            } => {
                let c = z[0] as usize;
                if c >= *components {
                    return Err(domain(format!("mixture state {c} out of range")));
                }
                let block = component
                    .jacobian_to_natural(&StandardParams::from(&theta[c * l..(c + 1) * l]))?;
                let mut j = DMatrix::zeros(l, s);
                j.view_mut((0, c * l), (l, l)).copy_from(&block);
                Ok(j)
            }
            Structure::Ppca {
                data_dim,
                latent_dim,
            } => {
                let var = theta[data_dim * latent_dim + data_dim];
                let eta = self.eta(z, theta)?;
                Ok(DMatrix::from_iterator(l, 1, eta.iter().map(|e| -e / var)))
            }
            Structure::SimpleFa {
                data_dim,
                latent_dim,
            } => {
                let (d, h) = (*data_dim, *latent_dim);
                let vars = &theta[..d];
                let w = &theta[d..];
                let mut j = DMatrix::zeros(2 * d, d);
                for row in 0..d {
                    let mean: f64 = (0..h).map(|col| w[row * h + col] * z[col]).sum();
                    j[(row, row)] = -mean / (vars[row] * vars[row]);
                    j[(d + row, row)] = 0.5 / (vars[row] * vars[row]);
                }
                Ok(j)
            }
            Structure::Sbn {
                latent_dim,
                data_dim,
                offsets,
            } => {
                let (h, d) = (*latent_dim, *data_dim);
                let mut j = DMatrix::zeros(d, s);
                for row in 0..d {
                    for col in 0..h {
                        j[(row, col * d + row)] = z[col];
                    }
                    if *offsets {
                        j[(row, h * d + row)] = 1.0;
                    }
                }
                Ok(j)
            }
            Structure::RigidSbn => Ok(DMatrix::from_column_slice(2, 1, &[z[0], z[0]])),
            Structure::Custom(_) => self.numeric_jacobian_eta(z, theta),
        }
    }

    /// Central-difference `∂ζ/∂Ψᵀ`.
    pub fn numeric_jacobian_zeta(&self, psi: &[f64]) -> Result<DMatrix<f64>> {
        let k = self.prior.family.natural_dim();
        let mut j = DMatrix::zeros(k, psi.len());
        let mut probe = psi.to_vec();
        for r in 0..psi.len() {
            let h = fd_step(psi[r]);
            probe[r] = psi[r] + h;
            let up = self.zeta(&probe)?;
            probe[r] = psi[r] - h;
            let down = self.zeta(&probe)?;
            probe[r] = psi[r];
            for i in 0..k {
                j[(i, r)] = (up[i] - down[i]) / (2.0 * h);
            }
        }
        Ok(j)
    }

    /// Central-difference `∂η/∂θᵀ` over `theta_subset`.
    pub fn numeric_jacobian_eta(&self, z: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        let l = self.noise.family.natural_dim();
        let subset = &self.noise.theta_subset;
        let mut j = DMatrix::zeros(l, subset.len());
        let mut probe = theta.to_vec();
        for (col, &idx) in subset.iter().enumerate() {
            let h = fd_step(theta[idx]);
            probe[idx] = theta[idx] + h;
            let up = self.eta(z, &probe)?;
            probe[idx] = theta[idx] - h;
            let down = self.eta(z, &probe)?;
            probe[idx] = theta[idx];
            for i in 0..l {
                j[(i, col)] = (up[i] - down[i]) / (2.0 * h);
            }
        }
        Ok(j)
    }

    /// log p_Ψ(z) using the model's current Ψ.
    pub fn log_prior(&self, z: &[f64]) -> Result<f64> {
        let zeta = self.zeta(self.psi())?;
        self.prior.family.log_density(&zeta, z)
    }

    /// log p_Θ(x | z) using the model's current Θ.
    pub fn log_likelihood_given(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        let eta = self.eta(z, self.theta())?;
        self.noise.family.log_density(&eta, x)
    }

    /// Standard parameters of the prior distribution.
    pub fn prior_standard(&self) -> Result<StandardParams> {
        self.prior.family.from_natural(&self.zeta(self.psi())?)
    }

    /// Standard parameters of `p(x | z)`.
    pub fn noise_standard(&self, z: &[f64]) -> Result<StandardParams> {
        self.noise.family.from_natural(&self.eta(z, self.theta())?)
    }

    /// Mixture weights including the implicit last one.
    pub fn mixture_weights(&self) -> Option<Vec<f64>> {
        match self.structure {
            Structure::Mixture { .. } => {
                let mut w = self.psi().to_vec();
                w.push(1.0 - self.psi().iter().sum::<f64>());
                Some(w)
            }
            _ => None,
        }
    }

    /// Per-component standard parameters of a mixture.
    pub fn mixture_components(&self) -> Option<Vec<Vec<f64>>> {
        match self.structure {
            Structure::Mixture { component, .. } => Some(
                self.theta()
                    .chunks(component.natural_dim())
                    .map(<[f64]>::to_vec)
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Linear-Gaussian parameters for p-PCA and simple FA.
    pub fn linear_gaussian(&self) -> Option<LinearGaussian> {
        let theta = self.theta();
        match self.structure {
            Structure::Ppca {
                data_dim: d,
                latent_dim: h,
            } => Some(LinearGaussian {
                weights: DMatrix::from_row_slice(d, h, &theta[..d * h]),
                offset: DVector::from_column_slice(&theta[d * h..d * h + d]),
                noise_vars: DVector::from_element(d, theta[d * h + d]),
                prior_var: self.psi()[0],
            }),
            Structure::SimpleFa {
                data_dim: d,
                latent_dim: h,
            } => Some(LinearGaussian {
                weights: DMatrix::from_row_slice(d, h, &theta[d..]),
                offset: DVector::zeros(d),
                noise_vars: DVector::from_column_slice(&theta[..d]),
                prior_var: self.psi()[0],
            }),
            _ => None,
        }
    }

    /// Priors, weights and (if present) offsets of a sigmoid belief net.
    pub fn sbn_parts(&self) -> Option<SbnParts> {
        match self.structure {
            Structure::Sbn {
                latent_dim: h,
                data_dim: d,
                offsets,
            } => Some(SbnParts {
                priors: self.psi().to_vec(),
                weights: DMatrix::from_column_slice(d, h, &self.theta()[..h * d]),
                offsets: offsets.then(|| self.theta()[h * d..].to_vec()),
            }),
            _ => None,
        }
    }

    /// A random prior-parameter point inside the model's domain.
    pub fn random_psi<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.structure {
            Structure::Mixture { .. } | Structure::Sbn { .. } | Structure::RigidSbn => {
                self.prior.family.random_standard(rng).into_vec()
            }
            Structure::Ppca { .. } | Structure::SimpleFa { .. } => {
                vec![(rng.random::<f64>() * 4.6 - 2.3).exp()]
            }
            Structure::Custom(_) => jitter(self.psi(), rng),
        }
    }

    /// A random noise-parameter point inside the model's domain.
    pub fn random_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let uniform = |rng: &mut R, lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
        match &self.structure {
            Structure::Mixture {
                component,
                components,
            } => (0..*components)
                .flat_map(|_| component.random_standard(rng).into_vec())
                .collect(),
            Structure::Ppca {
                data_dim,
                latent_dim,
            } => {
                let mut theta: Vec<f64> = (0..data_dim * latent_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                theta.extend((0..*data_dim).map(|_| uniform(rng, -3.0, 3.0)));
                theta.push(uniform(rng, -2.3, 2.3).exp());
                theta
            }
            Structure::SimpleFa {
                data_dim,
                latent_dim,
            } => {
                let mut theta: Vec<f64> =
                    (0..*data_dim).map(|_| uniform(rng, -2.3, 2.3).exp()).collect();
                let mut w = DMatrix::from_fn(*data_dim, *latent_dim, |_, _| {
                    rng.sample::<f64, _>(StandardNormal)
                });
                for mut column in w.column_iter_mut() {
                    let norm = column.norm();
                    column /= norm.max(f64::MIN_POSITIVE);
                }
                for row in 0..*data_dim {
                    theta.extend(w.row(row).iter());
                }
                theta
            }
            Structure::Sbn { .. } => (0..self.theta().len())
                .map(|_| uniform(rng, -2.0, 2.0))
                .collect(),
            Structure::RigidSbn => vec![uniform(rng, -2.0, 2.0)],
            Structure::Custom(_) => jitter(self.theta(), rng),
        }
    }

    /// Draws `count` latent states from the prior.
    pub fn sample_latents<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Vec<Vec<f64>>> {
        let prior = self.prior_standard()?;
        self.prior.family.sample(&prior, rng, count)
    }

    /// Ancestral samples `(z, x)`.
    pub fn sample_joint<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<JointSample> {
        let latents = self.sample_latents(rng, count)?;
        let mut observations = Vec::with_capacity(count);
        for z in &latents {
            let params = self.noise_standard(z)?;
            let mut x = self.noise.family.sample(&params, rng, 1)?;
            observations.push(x.pop().expect("one draw"));
        }
        Ok(JointSample {
            latents,
            observations,
        })
    }
}

fn jitter<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> Vec<f64> {
    values
        .iter()
        .map(|v| v * (1.0 + 0.1 * (rng.random::<f64>() - 0.5)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SbnParts {
    pub priors: Vec<f64>,
    pub weights: DMatrix<f64>,
    pub offsets: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointSample {
    pub latents: Vec<Vec<f64>>,
    pub observations: Vec<Vec<f64>>,
}

impl JointSample {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}
