mod common;

use efgen::criterion::{check_criterion, check_criterion_default, CriterionGrid, DEFAULT_THRESHOLD};
use efgen::family::Family;
use efgen::model::{make_ef_mixture, make_ppca, make_rigid_sbn, make_sbn, make_simple_fa, make_simple_sbn, GenerativeModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn passing_fixtures() -> Vec<(&'static str, GenerativeModel)> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        ("simple sbn", make_simple_sbn(0.5, 0.7, -0.4).unwrap()),
        ("simple fa", make_simple_fa(&DMatrix::from_column_slice(2, 1, &[0.6, 0.8]), &[0.5, 2.0], 1.0).unwrap()),
        ("simple fa 2", make_simple_fa(&DMatrix::from_column_slice(2, 1, &[s, -s]), &[1.5, 0.3], 0.4).unwrap()),
        (
            "sbn",
            make_sbn(&[0.2, 0.5, 0.7], &DMatrix::from_fn(5, 3, |i, j| (i as f64 - j as f64) * 0.4), &[0.0, 0.1, -0.1, 0.4, 0.2])
                .unwrap(),
        ),
        (
            "ppca",
            make_ppca(&DMatrix::from_fn(4, 2, |i, j| (i + j) as f64 * 0.3), &DVector::from_element(4, -0.5), 0.9, 1.0).unwrap(),
        ),
        ("diagonal gaussian", common::diagonal_noise_model()),
        (
            "gamma mixture",
            make_ef_mixture(Family::Gamma, &[0.2, 0.3, 0.5], &[vec![2.0, 1.0], vec![5.0, 0.5], vec![1.5, 3.0]]).unwrap(),
        ),
        (
            "poisson mixture",
            make_ef_mixture(Family::PoissonProduct { dim: 2 }, &[0.5, 0.5], &[vec![1.0, 5.0], vec![8.0, 0.5]]).unwrap(),
        ),
        (
            "gmm",
            make_ef_mixture(Family::GaussianDiagCov { dim: 2 }, &[0.5, 0.5], &[vec![0.0, 1.0, 1.0, 2.0], vec![3.0, -1.0, 0.5, 0.7]])
                .unwrap(),
        ),
    ]
}

#[test]
fn fixtures_pass_on_several_seeds() {
    for (name, model) in passing_fixtures() {
        for seed in 0..4 {
            let r = check_criterion_default(&model, seed).unwrap();
            assert!(r.passes, "{name} seed {seed}: {r:?}");
            assert!(r.prior_residual.max(r.noise_residual) < 1e-8, "{name}: {r:?}");
            assert_eq!(r.threshold, DEFAULT_THRESHOLD);
        }
    }
}

#[test]
fn rigid_sbn_fails_for_every_seed() {
    for (prior, v) in [(0.5, 0.0), (0.3, 2.0), (0.8, -0.5)] {
        let m = make_rigid_sbn(prior, v).unwrap();
        for seed in 0..4 {
            let r = check_criterion_default(&m, seed).unwrap();
            assert!(!r.passes && r.noise_residual >= 0.1, "{r:?}");
            assert!(r.prior_residual < 1e-12);
        }
    }
}

#[test]
fn reports_are_deterministic() {
    for (_, model) in passing_fixtures() {
        assert_eq!(check_criterion_default(&model, 9).unwrap(), check_criterion_default(&model, 9).unwrap());
    }
}

#[test]
fn passes_is_strictly_below_threshold() {
    let m = make_rigid_sbn(0.5, 0.0).unwrap();
    let z = [vec![0.0], vec![1.0]];
    let r = check_criterion(&m, &[vec![0.5]], &[vec![0.0]], &z, std::f64::consts::FRAC_1_SQRT_2).unwrap();
    assert!(!r.passes);
    let r = check_criterion(&m, &[vec![0.5]], &[vec![0.0]], &z, 0.75).unwrap();
    assert!(r.passes);
}

#[test]
fn real_latents_need_enough_samples() {
    let (_, m) = passing_fixtures().into_iter().find(|(n, _)| *n == "ppca").unwrap();
    let z: Vec<Vec<f64>> = vec![vec![0.1, 0.2]];
    assert!(check_criterion(&m, &[m.psi().to_vec()], &[m.theta().to_vec()], &z, 1e-6).is_err());
    let z = vec![vec![0.1, 0.2], vec![0.1, 0.2]];
    assert!(check_criterion(&m, &[m.psi().to_vec()], &[m.theta().to_vec()], &z, 1e-6).is_err());
    let z = vec![vec![0.1, 0.2], vec![-1.0, 0.4]];
    assert!(check_criterion(&m, &[m.psi().to_vec()], &[m.theta().to_vec()], &z, 1e-6).is_ok());
}

#[test]
fn out_of_domain_grid_points_are_errors() {
    let m = make_simple_sbn(0.5, 0.7, -0.4).unwrap();
    let z = [vec![0.0], vec![1.0]];
    assert!(check_criterion(&m, &[vec![1.5]], &[m.theta().to_vec()], &z, 1e-6).is_err());
    assert!(check_criterion(&m, &[vec![0.5]], &[m.theta().to_vec()], &[vec![0.0], vec![2.0]], 1e-6).is_err());
}

proptest! {
    #[test]
    fn rigid_residual_closed_form(v in -2.0f64..2.0) {
        let m = make_rigid_sbn(0.5, v).unwrap();
        let r = check_criterion(&m, &[vec![0.5]], &[vec![v]], &[vec![0.0], vec![1.0]], 1e-6).unwrap();
        let expected = std::f64::consts::FRAC_1_SQRT_2 / (v * v + (v + 1.0) * (v + 1.0)).sqrt().max(1.0);
        prop_assert!((r.noise_residual - expected).abs() < 1e-12);
        prop_assert!(r.noise_residual >= 0.196);
    }

    #[test]
    fn invariant_under_permutation(index in 0usize..10, seed in 0u64..1000, shift in 1usize..7) {
        let model = if index == 9 { make_rigid_sbn(0.4, 1.0).unwrap() } else { passing_fixtures().swap_remove(index).1 };
        let grid = CriterionGrid::default_for(&model, seed);
        let r = check_criterion(&model, &grid.psi, &grid.theta, &grid.z, DEFAULT_THRESHOLD).unwrap();
        let rotate = |v: &[Vec<f64>]| {
            let mut v = v.to_vec();
            let k = shift % v.len();
            v.rotate_left(k);
            v.reverse();
            v
        };
        let p = check_criterion(&model, &rotate(&grid.psi), &rotate(&grid.theta), &rotate(&grid.z), DEFAULT_THRESHOLD).unwrap();
        prop_assert_eq!(r.passes, p.passes);
        prop_assert!((r.noise_residual - p.noise_residual).abs() <= 1e-9 + 1e-6 * r.noise_residual);
    }
}
