mod common;

use efgen::family::{Family, StandardParams};
use efgen::learning::{
    em_mixture, em_mixture_from, fit_component, fit_ppca, fit_sbn, gamma_shape, grad_norm_all_params,
    ppca_eigen_solution, ppca_stationary_loglik, sample_moments, StopReason, TraceRecord, TrainingConfig,
    TrainingTrace,
};
use efgen::model::{make_ef_mixture, make_ppca, make_sbn, make_sbn_without_offsets, GenerativeModel};
use efgen::objective::{elbo_terms, exact_posterior, log_marginal_likelihood, VariationalState};
use efgen::special::digamma;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn every_iteration(max_iters: usize, seed: u64) -> TrainingConfig {
    TrainingConfig {
        max_iters,
        seed,
        record_every: 1,
        ..TrainingConfig::default()
    }
}

fn sample(model: &GenerativeModel, seed: u64, n: usize) -> Vec<Vec<f64>> {
    model.sample_joint(&mut ChaCha20Rng::seed_from_u64(seed), n).unwrap().observations
}

fn assert_monotone(name: &str, trace: &TrainingTrace) {
    assert!(trace.records.len() >= 2, "{name}: {} records", trace.records.len());
    for pair in trace.records.windows(2) {
        assert!(pair[1].iteration > pair[0].iteration);
        assert!(pair[1].elbo >= pair[0].elbo - 1e-10, "{name}: {} -> {}", pair[0].elbo, pair[1].elbo);
    }
}

fn gamma_mixture() -> GenerativeModel {
    make_ef_mixture(Family::Gamma, &[0.4, 0.6], &[vec![2.0, 4.0], vec![9.0, 1.0]]).unwrap()
}

#[test]
fn em_is_monotone() {
    let (gmm, gmm_data) = common::gmm_fixture(1, 300);
    let (pois, pois_data) = common::poisson_fixture(2, 300);
    let gam = gamma_mixture();
    let gam_data = sample(&gam, 3, 300);
    for (name, model, data) in [("gmm", gmm, gmm_data), ("poisson", pois, pois_data), ("gamma", gam, gam_data)] {
        let fit = em_mixture(&model, &data, &every_iteration(40, 5)).unwrap();
        assert_monotone(name, &fit.trace);
    }
    let sbn = make_sbn(
        &[0.3, 0.5, 0.7],
        &DMatrix::from_fn(8, 3, |i, j| ((i * 3 + j) as f64 * 0.77).cos() * 2.0),
        &[0.0; 8],
    )
    .unwrap();
    let data = sample(&sbn, 4, 200);
    assert_monotone("sbn", &fit_sbn(&sbn, &data, &every_iteration(25, 6)).unwrap().trace);
}

#[test]
fn ppca_em_is_monotone_and_reaches_the_eigen_solution() {
    let truth = make_ppca(
        &DMatrix::from_row_slice(4, 2, &[2.0, 0.0, 1.0, 1.5, -1.0, 0.5, 0.3, -2.0]),
        &DVector::from_column_slice(&[1.0, 0.0, -1.0, 2.0]),
        0.3,
        1.0,
    )
    .unwrap();
    let data = sample(&truth, 8, 300);
    assert_monotone("ppca", &fit_ppca(&data[..100], 2, &every_iteration(12, 1)).unwrap().em.trace);
    let fit = fit_ppca(&data, 2, &TrainingConfig { seed: 1, ..TrainingConfig::default() }).unwrap();
    assert!(fit.em.trace.converged, "{}", fit.em.trace.iterations);
    let eigen = log_marginal_likelihood(&fit.eigen_model, &data).unwrap();
    let em = log_marginal_likelihood(&fit.em.model, &data).unwrap();
    assert!((eigen - em).abs() < 1e-8, "{eigen} vs {em}");
    assert!(eigen >= em - 1e-12);
}

#[test]
fn ppca_likelihood_has_the_stationary_form() {
    for seed in 0..3 {
        let w = DMatrix::from_fn(5, 2, |i, j| ((seed as usize + i * 2 + j) as f64).sin() * 2.0);
        let truth = make_ppca(&w, &DVector::from_element(5, seed as f64), 0.5, 1.0).unwrap();
        let data = sample(&truth, seed, 400);
        let model = ppca_eigen_solution(&data, 2).unwrap();
        let lg = model.linear_gaussian().unwrap();
        let closed = ppca_stationary_loglik(&lg.weights, lg.noise_vars[0]).unwrap();
        let exact = log_marginal_likelihood(&model, &data).unwrap();
        assert!((closed - exact).abs() < 1e-6, "seed {seed}: {closed} vs {exact}");
        let (mean, _) = sample_moments(&data).unwrap();
        assert!((&lg.offset - mean).amax() < 1e-12);
    }
}

#[test]
fn ppca_recovers_noise_variance() {
    let truth = make_ppca(&DMatrix::from_column_slice(3, 1, &[1.5, -0.7, 1.0]), &DVector::zeros(3), 0.25, 1.0).unwrap();
    let data = sample(&truth, 12, 10_000);
    let model = ppca_eigen_solution(&data, 1).unwrap();
    let var = model.linear_gaussian().unwrap().noise_vars[0];
    assert!((var / 0.25 - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn ppca_degenerate_inputs() {
    let truth = make_ppca(&DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 1.0]), &DVector::zeros(3), 0.5, 1.0).unwrap();
    let data = sample(&truth, 0, 50);
    assert!(ppca_eigen_solution(&data, 3).is_err());
    assert!(ppca_eigen_solution(&data, 0).is_err());
    assert!(ppca_eigen_solution(&data[..3], 1).is_err());
    let flat: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64, 1.0]).collect();
    assert!(ppca_eigen_solution(&flat, 2).is_err());
}

#[test]
fn gamma_mixture_reaches_a_tight_stationary_point() {
    let model = gamma_mixture();
    let data = sample(&model, 21, 800);
    let fit = em_mixture(&model, &data, &TrainingConfig { max_iters: 20000, seed: 2, ..TrainingConfig::default() }).unwrap();
    assert!(fit.trace.converged, "{} iterations", fit.trace.iterations);
    let last = fit.trace.last().unwrap();
    assert!(last.grad_norm.unwrap() < 1e-7);
    assert!(last.relative_gap <= 1e-6, "{}", last.relative_gap);
}

#[test]
fn gamma_shape_recovery() {
    let truth = make_ef_mixture(Family::Gamma, &[1.0], &[vec![3.0, 2.0]]).unwrap();
    let data = sample(&truth, 5, 100_000);
    let start = make_ef_mixture(Family::Gamma, &[1.0], &[vec![1.0, 1.0]]).unwrap();
    let fit = em_mixture_from(&start, &data, &TrainingConfig::default()).unwrap();
    assert!(fit.trace.converged);
    let params = fit.model.mixture_components().unwrap().remove(0);
    assert!((params[0] / 3.0 - 1.0).abs() < 0.05, "{params:?}");
    assert!((params[1] / 2.0 - 1.0).abs() < 0.05, "{params:?}");
}

#[test]
fn fit_component_matches_weighted_moments() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let n = 40;
    let weights: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let total: f64 = weights.iter().sum();
    let wmean = |f: &dyn Fn(usize) -> f64| (0..n).map(|i| weights[i] * f(i)).sum::<f64>() / total;

    let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>() * 4.0 - 1.0, rng.random::<f64>()]).collect();
    let m0 = wmean(&|i| xs[i][0]);
    let m1 = wmean(&|i| xs[i][1]);
    let v0 = wmean(&|i| (xs[i][0] - m0).powi(2));
    let v1 = wmean(&|i| (xs[i][1] - m1).powi(2));
    let diag = fit_component(&Family::GaussianDiagCov { dim: 2 }, &xs, &weights).unwrap();
    for (a, b) in diag.iter().zip([m0, m1, v0, v1]) {
        assert!((a - b).abs() < 1e-13);
    }
    let scalar = fit_component(&Family::GaussianScalarVar { dim: 2 }, &xs, &weights).unwrap();
    assert!((scalar[2] - 0.5 * (v0 + v1)).abs() < 1e-13);

    let counts: Vec<Vec<f64>> = (0..n).map(|i| vec![(i % 7) as f64]).collect();
    let rate = fit_component(&Family::PoissonProduct { dim: 1 }, &counts, &weights).unwrap();
    assert!((rate[0] - wmean(&|i| (i % 7) as f64)).abs() < 1e-13);

    let labels: Vec<Vec<f64>> = (0..n).map(|i| vec![(i % 3) as f64]).collect();
    let cat = fit_component(&Family::Categorical { states: 3 }, &labels, &weights).unwrap();
    for (c, p) in cat.iter().enumerate() {
        assert!((p - wmean(&|i| if i % 3 == c { 1.0 } else { 0.0 })).abs() < 1e-13);
    }

    let pos: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[1] + 0.1]).collect();
    let g = fit_component(&Family::Gamma, &pos, &weights).unwrap();
    let mean = wmean(&|i| pos[i][0]);
    let mean_log = wmean(&|i| pos[i][0].ln());
    assert!((g[0] / g[1] - mean).abs() < 1e-12);
    assert!((g[0].ln() - digamma(g[0]).unwrap() - (mean.ln() - mean_log)).abs() < 1e-10);

    assert!(fit_component(&Family::Gamma, &pos, &vec![0.0; n]).is_err());
}

#[test]
fn single_component_fixed_point_is_stationary() {
    let data: Vec<Vec<f64>> = [0.3, -1.2, 2.5, 0.9, 1.7].iter().map(|&x| vec![x]).collect();
    let mean = data.iter().map(|x| x[0]).sum::<f64>() / 5.0;
    let var = data.iter().map(|x| (x[0] - mean).powi(2)).sum::<f64>() / 5.0;
    let family = Family::GaussianScalarVar { dim: 1 };
    let model = make_ef_mixture(family, &[1.0], &[vec![mean, var]]).unwrap();
    let q = exact_posterior(&model, &data).unwrap();
    assert!(grad_norm_all_params(&model, &data, &q).unwrap() < 1e-9);
    let fit = em_mixture_from(&model, &data, &TrainingConfig::default()).unwrap();
    let direct = data
        .iter()
        .map(|x| family.log_density(&family.to_natural(&StandardParams::from(vec![mean, var])).unwrap(), x).unwrap())
        .sum::<f64>()
        / 5.0;
    assert!((fit.trace.last().unwrap().elbo - direct).abs() < 1e-12);
}

#[test]
fn perturbed_fixed_point_has_a_large_gradient() {
    let (truth, data) = common::gmm_fixture(0, 500);
    let fit = em_mixture(&truth, &data, &TrainingConfig::default()).unwrap();
    assert!(fit.trace.final_grad_norm().unwrap() < 1e-7);
    let theta: Vec<f64> = fit.model.theta().iter().map(|t| t + 0.1).collect();
    let perturbed = fit.model.with_params(fit.model.psi().to_vec(), theta).unwrap();
    assert!(grad_norm_all_params(&perturbed, &data, &fit.posterior).unwrap() > 1e-3);
}

#[test]
fn uninformative_sbn_posterior_is_the_prior() {
    let model = make_sbn(&[0.5, 0.5], &DMatrix::zeros(3, 2), &[0.0; 3]).unwrap();
    let data = sample(&model, 1, 20);
    let VariationalState::EnumeratedTable { probs } = exact_posterior(&model, &data).unwrap() else {
        panic!("SBN posteriors are enumerated")
    };
    assert!(probs.iter().flatten().all(|p| (p - 0.25).abs() < 1e-15));
}

#[test]
fn sbn_with_offsets_reaches_a_tight_stationary_point() {
    let truth = make_sbn(
        &[0.35, 0.6],
        &DMatrix::from_row_slice(6, 2, &[3.0, -2.0, -2.5, 2.0, 2.0, 2.5, -3.0, 0.5, 0.5, -3.0, 2.0, 2.0]),
        &[-1.0, 0.5, -1.5, 1.0, 0.5, -2.0],
    )
    .unwrap();
    let data = sample(&truth, 13, 1500);
    let config = TrainingConfig { max_iters: 20000, seed: 4, ..TrainingConfig::default() };
    let fit = fit_sbn(&truth, &data, &config).unwrap();
    assert!(fit.trace.converged, "{} iterations", fit.trace.iterations);
    let report = elbo_terms(&fit.model, &data, &fit.posterior).unwrap();
    assert!(report.relative_gap <= 1e-5, "{}", report.relative_gap);
}

#[test]
fn sbn_without_offsets_trains() {
    let truth = make_sbn_without_offsets(&[0.4], &DMatrix::from_column_slice(2, 1, &[2.0, -1.5])).unwrap();
    let data = sample(&truth, 2, 500);
    let fit = fit_sbn(&truth, &data, &TrainingConfig { max_iters: 20000, ..TrainingConfig::default() }).unwrap();
    assert!(fit.model.sbn_parts().unwrap().offsets.is_none());
    assert!(fit.trace.converged);
    assert!(fit.trace.last().unwrap().relative_gap <= 1e-5);
}

fn without_times(records: &[TraceRecord]) -> Vec<TraceRecord> {
    records.iter().map(|r| TraceRecord { wall_time: 0.0, ..r.clone() }).collect()
}

#[test]
fn training_is_deterministic() {
    let (truth, data) = common::poisson_fixture(3, 300);
    let config = TrainingConfig { seed: 17, ..TrainingConfig::default() };
    let a = em_mixture(&truth, &data, &config).unwrap();
    let b = em_mixture(&truth, &data, &config).unwrap();
    assert_eq!(without_times(&a.trace.records), without_times(&b.trace.records));
    assert_eq!(a.model.theta(), b.model.theta());
    assert_eq!(a.trace.rng_algorithm, "chacha20");

    let sbn = make_sbn(&[0.5, 0.5], &DMatrix::from_fn(4, 2, |i, j| i as f64 - j as f64), &[0.0; 4]).unwrap();
    let data = sample(&sbn, 0, 100);
    let config = every_iteration(10, 8);
    let a = fit_sbn(&sbn, &data, &config).unwrap();
    let b = fit_sbn(&sbn, &data, &config).unwrap();
    assert_eq!(without_times(&a.trace.records), without_times(&b.trace.records));
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let (truth, data) = common::gmm_fixture(2, 200);
    let fit = em_mixture(&truth, &data, &TrainingConfig { max_iters: 1, ..TrainingConfig::default() }).unwrap();
    assert!(!fit.trace.converged);
    assert_eq!(fit.trace.stop_reason, StopReason::MaxIters);
    assert_eq!(fit.trace.iterations, 1);
    assert_eq!(fit.trace.records.len(), 1);
    assert!(fit.trace.records[0].grad_norm.is_some());
}

#[test]
fn invalid_configs_and_models_are_rejected() {
    let (truth, data) = common::gmm_fixture(0, 20);
    for bad in [
        TrainingConfig { max_iters: 0, ..TrainingConfig::default() },
        TrainingConfig { elbo_rel_tol: 0.0, ..TrainingConfig::default() },
        TrainingConfig { grad_norm_tol: -1.0, ..TrainingConfig::default() },
        TrainingConfig { record_every: 0, ..TrainingConfig::default() },
    ] {
        assert!(em_mixture_from(&truth, &data, &bad).is_err(), "{bad:?}");
    }
    let sbn = make_sbn(&[0.5], &DMatrix::from_element(2, 1, 1.0), &[0.0, 0.0]).unwrap();
    assert!(em_mixture(&sbn, &[vec![0.0, 1.0]], &TrainingConfig::default()).is_err());
    assert!(fit_sbn(&truth, &data, &TrainingConfig::default()).is_err());
}

#[test]
fn small_gradients_imply_small_gaps() {
    for seed in 0..3 {
        let (truth, data) = common::gmm_fixture(seed, 400);
        let fit = em_mixture(&truth, &data, &TrainingConfig { seed, ..TrainingConfig::default() }).unwrap();
        assert!(fit.trace.converged);
        for r in fit.trace.records.iter().filter(|r| r.grad_norm.is_some_and(|g| g < 1e-7)) {
            assert!(r.relative_gap <= 1e-6, "gmm seed {seed} iteration {}: {}", r.iteration, r.relative_gap);
        }

        let (truth, data) = common::poisson_fixture(seed, 400);
        let fit = em_mixture(&truth, &data, &TrainingConfig { seed, ..TrainingConfig::default() }).unwrap();
        assert!(fit.trace.converged);
        let last = fit.trace.last().unwrap();
        assert!(last.gap > 1e-3, "standard gap should not close with a factorial base measure");
        for r in fit.trace.records.iter().filter(|r| r.grad_norm.is_some_and(|g| g < 1e-7)) {
            let relative = r.pseudo_gap / r.pseudo_elbo.abs().max(1.0);
            assert!(relative <= 1e-6, "poisson seed {seed} iteration {}: {relative}", r.iteration);
        }
    }
}

proptest! {
    #[test]
    fn gamma_shape_inverts_its_equation(e in -2.0f64..4.0) {
        let alpha = 10f64.powf(e);
        let s = alpha.ln() - digamma(alpha).unwrap();
        let got = gamma_shape(s).unwrap();
        prop_assert!((got - alpha).abs() <= 1e-8 * alpha, "{} vs {}", got, alpha);
    }

    #[test]
    fn gamma_shape_rejects_non_positive_targets(s in -10.0f64..=0.0) {
        prop_assert!(gamma_shape(s).is_err());
    }
}
