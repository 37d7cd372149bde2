//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use efgen::family::{Family, NaturalParams, StandardParams};
use nalgebra::{DMatrix, DVector};

const DE_STEP: f64 = 1.0 / 64.0;
const DE_SPAN: f64 = 6.0;

fn de_sum(mut term: impl FnMut(f64) -> f64) -> f64 {
    let n = (DE_SPAN / DE_STEP) as i64;
    let mut total = 0.0;
    for k in -n..=n {
        let v = term(k as f64 * DE_STEP);
        if v.is_finite() {
            total += v;
        }
    }
    total * DE_STEP
}

/// ∫_ℝ f(u) du by the sinh-sinh rule.
pub fn integrate_real_line(f: impl Fn(f64) -> f64) -> f64 {
    de_sum(|t| {
        let s = FRAC_PI_2 * t.sinh();
        let u = s.sinh();
        f(u) * FRAC_PI_2 * t.cosh() * s.cosh()
    })
}

/// ∫_0^∞ f(u) du by the exp-sinh rule.
pub fn integrate_half_line(f: impl Fn(f64) -> f64) -> f64 {
    de_sum(|t| {
        let s = FRAC_PI_2 * t.sinh();
        let u = s.exp();
        if u == 0.0 || !u.is_finite() {
            return 0.0;
        }
        f(u) * u * FRAC_PI_2 * t.cosh()
    })
}

/// `E_p[g(x)]` for a one-dimensional continuous family, integrated in a
/// standardized coordinate.
pub fn expect_continuous(family: &Family, n: &NaturalParams, g: impl Fn(f64, f64) -> f64) -> f64 {
    let s = family.from_natural(n).unwrap();
    let log_p = |x: f64| family.log_density(n, &[x]).unwrap_or(f64::NEG_INFINITY);
    let weight = |x: f64| {
        let l = log_p(x);
        if l == f64::NEG_INFINITY {
            0.0
        } else {
            l.exp() * g(x, l)
        }
    };
    match family {
        Family::GaussianScalarVar { dim: 1 } | Family::GaussianDiagCov { dim: 1 } => {
            let (mu, sd) = (s[0], s[1].sqrt());
            integrate_real_line(|u| weight(mu + sd * u)) * sd
        }
        Family::Gamma => {
            let beta = s[1];
            integrate_half_line(|u| weight(u / beta)) / beta
        }
        other => panic!("no quadrature for {other:?}"),
    }
}

/// Every support point of a discrete family with its log-probability; the
/// Poisson range is truncated far beyond a 1e-16 tail.
pub fn enumerate_discrete(family: &Family, n: &NaturalParams) -> Vec<(Vec<f64>, f64)> {
    let points: Vec<Vec<f64>> = match family {
        Family::BernoulliProduct { dim } => (0..1usize << dim)
            .map(|s| (0..*dim).map(|b| ((s >> b) & 1) as f64).collect())
            .collect(),
        Family::Categorical { states } => (0..*states).map(|c| vec![c as f64]).collect(),
        Family::PoissonProduct { dim } => {
            let rates: Vec<f64> = n.iter().map(|e| e.exp()).collect();
            let limits: Vec<u64> = rates.iter().map(|l| (l + 40.0 * l.sqrt() + 60.0) as u64).collect();
            let mut points = vec![vec![]];
            for d in 0..*dim {
                points = points
                    .into_iter()
                    .flat_map(|p: Vec<f64>| {
                        (0..=limits[d]).map(move |k| {
                            let mut q = p.clone();
                            q.push(k as f64);
                            q
                        })
                    })
                    .collect();
            }
            points
        }
        other => panic!("{other:?} is not discrete"),
    };
    points
        .into_iter()
        .map(|x| {
            let l = family.log_density(n, &x).unwrap();
            (x, l)
        })
        .collect()
}

/// `E_p[g(x, log p(x))]` by quadrature or summation.
pub fn expectation(family: &Family, n: &NaturalParams, g: impl Fn(&[f64], f64) -> f64) -> f64 {
    if family.is_discrete() {
        enumerate_discrete(family, n)
            .iter()
            .map(|(x, l)| if *l == f64::NEG_INFINITY { 0.0 } else { l.exp() * g(x, *l) })
            .sum()
    } else {
        expect_continuous(family, n, |x, l| g(&[x], l))
    }
}

/// Central-difference gradient of the log-partition function.
pub fn fd_grad_log_partition(family: &Family, n: &NaturalParams) -> Vec<f64> {
    (0..n.len())
        .map(|i| {
            let h = 1e-6 * n[i].abs().max(1.0);
            let mut up = n.clone();
            up.0[i] += h;
            let mut down = n.clone();
            down.0[i] -= h;
            (family.log_partition(&up).unwrap() - family.log_partition(&down).unwrap()) / (2.0 * h)
        })
        .collect()
}

/// Family test grid: one-dimensional continuous cases plus small discrete
/// ones, each with fixed and seeded random parameter points.
pub fn calculus_grid() -> Vec<(Family, Vec<StandardParams>)> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(20);
    let families = [
        (Family::BernoulliProduct { dim: 3 }, vec![vec![0.5, 0.1, 0.9]]),
        (Family::Categorical { states: 4 }, vec![vec![0.25, 0.25, 0.25]]),
        (Family::GaussianScalarVar { dim: 1 }, vec![vec![2.0, 1.0], vec![-0.3, 0.01]]),
        (Family::GaussianDiagCov { dim: 1 }, vec![vec![0.0, 1.0 / (2.0 * std::f64::consts::PI * std::f64::consts::E)]]),
        (Family::Gamma, vec![vec![2.0, 3.0], vec![0.3, 0.5], vec![9.0, 10.0]]),
        (Family::PoissonProduct { dim: 2 }, vec![vec![1.0, 1.0], vec![0.1, 20.0]]),
        (Family::PoissonProduct { dim: 1 }, vec![vec![4.0]]),
    ];
    families
        .into_iter()
        .map(|(family, fixed)| {
            let mut points: Vec<StandardParams> = fixed.into_iter().map(StandardParams::from).collect();
            for _ in 0..4 {
                points.push(family.random_standard(&mut rng));
            }
            (family, points)
        })
        .collect()
}

/// `log N(x; mean, cov)` via an LU-based inverse and determinant.
pub fn gaussian_log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let lu = cov.clone().lu();
    let det = lu.determinant();
    let inv = lu.try_inverse().expect("invertible covariance");
    let c = x - mean;
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + det.ln() + (c.transpose() * inv * &c)[(0, 0)])
}

fn logistic(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// Average SBN log-likelihood by brute-force enumeration of latent states.
pub fn sbn_log_likelihood(priors: &[f64], weights: &DMatrix<f64>, offsets: &[f64], data: &[Vec<f64>]) -> f64 {
    let h = priors.len();
    let total: f64 = data
        .iter()
        .map(|x| {
            let mut p = 0.0;
            for s in 0..1usize << h {
                let z: Vec<f64> = (0..h).map(|b| ((s >> b) & 1) as f64).collect();
                let mut joint: f64 = z.iter().zip(priors).map(|(&z, &p)| if z > 0.5 { p } else { 1.0 - p }).product();
                for (d, &xd) in x.iter().enumerate() {
                    let a: f64 = (0..h).map(|k| weights[(d, k)] * z[k]).sum::<f64>() + offsets[d];
                    let on = logistic(a);
                    joint *= if xd > 0.5 { on } else { 1.0 - on };
                }
                p += joint;
            }
            p.ln()
        })
        .sum();
    total / data.len() as f64
}

/// Average mixture log-likelihood from component log-densities.
pub fn mixture_log_likelihood(family: &Family, weights: &[f64], params: &[Vec<f64>], data: &[Vec<f64>]) -> f64 {
    let naturals: Vec<NaturalParams> = params
        .iter()
        .map(|p| family.to_natural(&StandardParams::from(p.clone())).unwrap())
        .collect();
    let total: f64 = data
        .iter()
        .map(|x| {
            weights
                .iter()
                .zip(&naturals)
                .map(|(w, n)| w * family.log_density(n, x).unwrap().exp())
                .sum::<f64>()
                .ln()
        })
        .sum();
    total / data.len() as f64
}

/// Seeded well-separated Gaussian mixture and N samples from it. `C` is 2
/// or 3 and `D` is 1 or 2 depending on the seed.
pub fn gmm_fixture(seed: u64, n: usize) -> (efgen::model::GenerativeModel, Vec<Vec<f64>>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1000 + seed);
    let c = 2 + (seed % 2) as usize;
    let d = 1 + ((seed / 2) % 2) as usize;
    let family = if d == 1 {
        Family::GaussianScalarVar { dim: 1 }
    } else {
        Family::GaussianDiagCov { dim: d }
    };
    let raw: Vec<f64> = (0..c).map(|_| 1.0 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let params: Vec<Vec<f64>> = (0..c)
        .map(|k| {
            let means: Vec<f64> = (0..d).map(|j| 6.0 * k as f64 * (1.0 - j as f64 * 0.5) + rng.random::<f64>() - 0.5).collect();
            let vars: Vec<f64> = (0..d).map(|_| 0.5 + rng.random::<f64>()).collect();
            if d == 1 {
                vec![means[0], vars[0]]
            } else {
                means.into_iter().chain(vars).collect()
            }
        })
        .collect();
    let model = efgen::model::make_ef_mixture(family, &weights, &params).unwrap();
    let data = model.sample_joint(&mut rng, n).unwrap().observations;
    (model, data)
}

/// Seeded two-component Poisson mixture over two count dimensions.
pub fn poisson_fixture(seed: u64, n: usize) -> (efgen::model::GenerativeModel, Vec<Vec<f64>>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(2000 + seed);
    let mut jitter = |base: f64| base * (0.8 + 0.4 * rng.random::<f64>());
    let params = vec![vec![jitter(2.0), jitter(9.0)], vec![jitter(12.0), jitter(1.0)]];
    let w = 0.3 + 0.4 * rng.random::<f64>();
    let model = efgen::model::make_ef_mixture(Family::PoissonProduct { dim: 2 }, &[w, 1.0 - w], &params).unwrap();
    let data = model.sample_joint(&mut rng, n).unwrap().observations;
    (model, data)
}

/// Diagonal-covariance Gaussian noise with a non-linear mean map
/// `tanh(W z) + b`, prior `N(0, τ I)`.
pub fn diagonal_noise_model() -> efgen::model::GenerativeModel {
    let (h, d) = (2usize, 4usize);
    let zeta = std::sync::Arc::new(move |psi: &[f64]| {
        let mut n = vec![0.0; h];
        n.push(-0.5 / psi[0]);
        n
    });
    let eta = std::sync::Arc::new(move |z: &[f64], theta: &[f64]| {
        let vars = &theta[..d];
        let w = &theta[d..d + d * h];
        let b = &theta[d + d * h..];
        let mean = (0..d).map(|i| ((0..h).map(|k| w[i * h + k] * z[k]).sum::<f64>()).tanh() + b[i]);
        mean.zip(vars)
            .map(|(m, v)| m / v)
            .chain(vars.iter().map(|v| -0.5 / v))
            .collect()
    });
    let mut theta = vec![0.5, 1.0, 2.0, 0.8];
    theta.extend((0..d * h).map(|i| (i as f64 * 0.9).cos()));
    theta.extend([0.1, -0.2, 0.3, 0.0]);
    efgen::model::make_custom(
        efgen::model::PriorSpec {
            family: Family::GaussianScalarVar { dim: h },
            params: vec![1.5],
        },
        efgen::model::NoiseSpec {
            family: Family::GaussianDiagCov { dim: d },
            params: theta,
            theta_subset: (0..d).collect(),
        },
        efgen::model::LatentSupport::RealVector(h),
        efgen::model::CustomMaps { zeta, eta },
    )
    .expect("valid custom model")
}
