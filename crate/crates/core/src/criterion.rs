//! Numerical test of the parameterization criterion: ζ(Ψ) must lie in the
//! column space of ∂ζ/∂Ψᵀ, and η(z;Θ) in the column space of ∂η/∂θᵀ with one
//! coefficient vector shared by every z.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::{GenerativeModel, LatentSupport};

pub const DEFAULT_THRESHOLD: f64 = 1e-6;
pub const DEFAULT_GRID_POINTS: usize = 8;
pub const DEFAULT_Z_SAMPLES: usize = 16;
/// Finite latent spaces up to this size are used in full.
pub const MAX_ENUMERATED_Z: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub prior_residual: f64,
    pub noise_residual: f64,
    pub passes: bool,
    pub tested_points: usize,
    pub threshold: f64,
    pub z_samples: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Grids and latent samples for one criterion run.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionGrid {
    pub psi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

impl CriterionGrid {
    /// The model's own point plus random domain points, and all latent
    /// states (finite support) or standard-normal draws.
    pub fn default_for(model: &GenerativeModel, seed: u64) -> Self {
        Self::with_sizes(model, seed, DEFAULT_GRID_POINTS, DEFAULT_Z_SAMPLES)
    }

    /// `grid_points` parameter points (the first is the model's own) and at
    /// least `max(z_samples, 2·S)` latent samples when they must be drawn.
    pub fn with_sizes(model: &GenerativeModel, seed: u64, grid_points: usize, z_samples: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut psi = vec![model.psi().to_vec()];
        let mut theta = vec![model.theta().to_vec()];
        for _ in 1..grid_points.max(1) {
            psi.push(model.random_psi(&mut rng));
            theta.push(model.random_theta(&mut rng));
        }
        let s = model.noise().theta_subset.len();
        let z = match model.latent_support() {
            LatentSupport::FiniteStates(states) if states.len() <= MAX_ENUMERATED_Z => states.clone(),
            LatentSupport::FiniteStates(states) => {
                let count = z_samples.max(2 * s).min(states.len());
                rand::seq::index::sample(&mut rng, states.len(), count)
                    .into_iter()
                    .map(|i| states[i].clone())
                    .collect()
            }
            LatentSupport::RealVector(h) => (0..z_samples.max(2 * s))
                .map(|_| (0..*h).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                .collect(),
        };
        CriterionGrid { psi, theta, z }
    }
}

struct LeastSquares {
    residual: f64,
    rank: usize,
}

/// Distance from `b` to the column space of `j`, by a rank-revealing
/// column-pivoted QR. (The SVD in nalgebra 0.35 loses accuracy on some
/// scaled permutation matrices, which this check produces routinely.)
fn least_squares(j: DMatrix<f64>, b: &DVector<f64>) -> LeastSquares {
    let (rows, cols) = j.shape();
    if rows == 0 || cols == 0 {
        return LeastSquares {
            residual: b.norm(),
            rank: 0,
        };
    }
    let qr = j.col_piv_qr();
    let r = qr.r();
    let largest = r[(0, 0)].abs();
    let eps = largest * 1e-12 * (rows.max(cols) as f64);
    let rank = (0..rows.min(cols)).take_while(|&k| r[(k, k)].abs() > eps).count();
    let q = qr.q();
    let basis = q.columns(0, rank);
    let residual = (b - basis * (basis.transpose() * b)).norm();
    LeastSquares { residual, rank }
}

/// Runs the criterion on explicit grids.
///
/// The noise part stacks every z sample into one least-squares system so the
/// coefficient vector cannot depend on z. Finite latent spaces smaller than
/// 2·S are accepted when every state is supplied.
pub fn check_criterion(
    model: &GenerativeModel,
    psi_grid: &[Vec<f64>],
    theta_grid: &[Vec<f64>],
    z_samples: &[Vec<f64>],
    threshold: f64,
) -> Result<CriterionReport> {
    if psi_grid.is_empty() || theta_grid.is_empty() {
        return Err(domain("criterion grids must be non-empty"));
    }
    if !(threshold > 0.0) {
        return Err(domain(format!("threshold must be positive, got {threshold}")));
    }
    let s = model.noise().theta_subset.len();
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for z in z_samples {
        model.prior().family.check_support(z)?;
        if !distinct.contains(&z) {
            distinct.push(z);
        }
    }
    let available = match model.latent_support() {
        LatentSupport::FiniteStates(states) => states.len(),
        LatentSupport::RealVector(_) => usize::MAX,
    };
    let required = (2 * s).min(available);
    if distinct.len() < required {
        return Err(domain(format!(
            "criterion needs at least {required} distinct z samples, got {}",
            distinct.len()
        )));
    }

    let mut warnings = Vec::new();
    let mut prior_residual: f64 = 0.0;
    for (i, psi) in psi_grid.iter().enumerate() {
        let checked = model.with_params(psi.clone(), model.theta().to_vec())?;
        let zeta = DVector::from_vec(checked.zeta(psi)?.into_vec());
        let ls = least_squares(checked.jacobian_zeta(psi)?, &zeta);
        if ls.rank < psi.len() {
            warnings.push(format!("prior Jacobian rank {} < {} at grid point {i}", ls.rank, psi.len()));
        }
        prior_residual = prior_residual.max(ls.residual / zeta.norm().max(1.0));
    }

    let l = model.noise().family.natural_dim();
    let mut noise_residual: f64 = 0.0;
    for (i, theta) in theta_grid.iter().enumerate() {
        let checked = model.with_params(model.psi().to_vec(), theta.clone())?;
        let rows = distinct.len() * l;
        let mut stacked_j = DMatrix::zeros(rows, s);
        let mut stacked_eta = DVector::zeros(rows);
        for (k, z) in distinct.iter().enumerate() {
            let eta = checked.eta(z, theta)?;
            checked.noise().family.check_natural(&eta)?;
            stacked_j
                .view_mut((k * l, 0), (l, s))
                .copy_from(&checked.jacobian_eta(z, theta)?);
            stacked_eta.rows_mut(k * l, l).copy_from_slice(&eta);
        }
        let ls = least_squares(stacked_j, &stacked_eta);
        if ls.rank < s {
            warnings.push(format!("stacked noise Jacobian rank {} < {s} at grid point {i}", ls.rank));
        }
        noise_residual = noise_residual.max(ls.residual / stacked_eta.norm().max(1.0));
    }

    Ok(CriterionReport {
        prior_residual,
        noise_residual,
        passes: prior_residual.max(noise_residual) < threshold,
        tested_points: psi_grid.len() + theta_grid.len(),
        threshold,
        z_samples: distinct.len(),
        warnings,
    })
}

/// Runs the criterion on [`CriterionGrid::default_for`].
pub fn check_criterion_default(model: &GenerativeModel, seed: u64) -> Result<CriterionReport> {
    let grid = CriterionGrid::default_for(model, seed);
    check_criterion(model, &grid.psi, &grid.theta, &grid.z, DEFAULT_THRESHOLD)
}
