mod common;

use common::{canonical_pairs, random_dataset, rel_err};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sqlglm::glm::{irls_fit, score_and_info, score_weights, ParamVector, SubsampleData};
use sqlglm::linalg::SymMatrix;
use sqlglm::{Error, Family, Link};

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn pv(spec: &sqlglm::ModelSpec, values: &[f64]) -> ParamVector {
    ParamVector::new(spec.labels().unwrap(), values.to_vec()).unwrap()
}

fn eta_range(link: Link) -> std::ops::RangeInclusive<f64> {
    // Wider logit arguments leave too few significant digits in μ for a
    // central difference to resolve μ'.
    match link {
        Link::Logit => -8.0..=8.0,
        Link::Log => -20.0..=20.0,
        Link::Identity => -100.0..=100.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn link_derivative_matches_central_difference(link_ix in 0usize..3, t in 0.0f64..1.0) {
        let link = [Link::Logit, Link::Log, Link::Identity][link_ix];
        let r = eta_range(link);
        let eta = r.start() + t * (r.end() - r.start());
        let h = 1e-6 * eta.abs().max(1.0);
        let fd = (link.mean_from_eta(eta + h) - link.mean_from_eta(eta - h)) / (2.0 * h);
        let d = link.mu_eta(eta);
        prop_assert!(d > 0.0);
        prop_assert!(rel_err(d, fd) < 1e-6, "eta {eta}: {d} vs {fd}");
    }

    #[test]
    fn canonical_weight_is_one(pair in 0usize..3, t in -1.0f64..1.0) {
        let (family, link) = canonical_pairs()[pair];
        let (w, _) = score_weights(family, link, 30.0 * t, 1.0).unwrap();
        prop_assert_eq!(w, 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn score_is_loglik_gradient(pair in 0usize..4, n in 5usize..=50, p in 1usize..=4, seed: u64) {
        let (family, link) = canonical_pairs()[pair];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dataset(family, link, n, p, &mut rng, 0.5, 0.5);
        let si = score_and_info(&d.data, &d.spec, &pv(&d.spec, &d.beta), 1.0).unwrap();
        let h = 1e-6;
        let fd: Vec<f64> = (0..p)
            .map(|j| {
                let mut bp = d.beta.clone();
                let mut bm = d.beta.clone();
                bp[j] += h;
                bm[j] -= h;
                (common::loglik(family, link, &d.x, &d.y, &bp) - common::loglik(family, link, &d.x, &d.y, &bm)) / (2.0 * h)
            })
            .collect();
        let scale = norm_inf(&fd).max(1e-3);
        for j in 0..p {
            prop_assert!((si.u[j] - fd[j]).abs() / scale < 1e-5, "{family:?}: U[{j}] {} vs {}", si.u[j], fd[j]);
        }
    }

    #[test]
    fn canonical_information_is_negative_hessian(pair in 0usize..3, n in 5usize..=50, p in 1usize..=4, seed: u64) {
        let (family, link) = canonical_pairs()[pair];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dataset(family, link, n, p, &mut rng, 0.5, 0.5);
        let si = score_and_info(&d.data, &d.spec, &pv(&d.spec, &d.beta), 1.0).unwrap();
        let h = 1e-4;
        let ll = |b: &[f64]| common::loglik(family, link, &d.x, &d.y, b);
        let mut hess = vec![vec![0.0; p]; p];
        for j in 0..p {
            for k in 0..p {
                let at = |sj: f64, sk: f64| {
                    let mut b = d.beta.clone();
                    b[j] += sj * h;
                    b[k] += sk * h;
                    ll(&b)
                };
                hess[j][k] = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h);
            }
        }
        let scale = hess.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..p {
            for k in 0..p {
                prop_assert!(
                    (si.info.get(j, k) + hess[j][k]).abs() / scale < 1e-4,
                    "{family:?}: I[{j},{k}] {} vs {}", si.info.get(j, k), -hess[j][k]
                );
            }
        }
    }

    #[test]
    fn score_info_is_additive(pair in 0usize..4, n in 2usize..=60, p in 1usize..=5, cut in 0.0f64..1.0, seed: u64) {
        let (family, link) = canonical_pairs()[pair];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dataset(family, link, n, p, &mut rng, 0.5, 1.0);
        let beta = pv(&d.spec, &d.beta);
        let split = ((n as f64) * cut) as usize;
        let whole = score_and_info(&d.data, &d.spec, &beta, 1.0).unwrap();
        let a = score_and_info(&d.data.slice(0..split), &d.spec, &beta, 1.0).unwrap();
        let b = score_and_info(&d.data.slice(split..n), &d.spec, &beta, 1.0).unwrap();
        let merged = a.merge(&b).unwrap();
        prop_assert_eq!(merged.n_rows, whole.n_rows);
        let us = norm_inf(&whole.u).max(f64::MIN_POSITIVE);
        for j in 0..p {
            prop_assert!((merged.u[j] - whole.u[j]).abs() / us < 1e-12);
        }
        let is = whole.info.max_abs().max(f64::MIN_POSITIVE);
        for j in 0..p {
            for k in 0..=j {
                prop_assert!((merged.info.get(j, k) - whole.info.get(j, k)).abs() / is < 1e-12);
            }
        }
        prop_assert!(rel_err(merged.deviance, whole.deviance) < 1e-12);
    }

    #[test]
    fn matches_per_row_oracle(pair in 0usize..4, n in 1usize..=50, p in 1usize..=4, seed: u64) {
        let (family, link) = canonical_pairs()[pair];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dataset(family, link, n, p, &mut rng, 1.0, 1.0);
        let si = score_and_info(&d.data, &d.spec, &pv(&d.spec, &d.beta), 1.0).unwrap();
        let (u, info) = common::score_info(family, link, &d.x, &d.y, &d.beta);
        let us = norm_inf(&u).max(1e-300);
        for j in 0..p {
            prop_assert!((si.u[j] - u[j]).abs() / us < 1e-12);
            for k in 0..p {
                prop_assert!(rel_err(si.info.get(j, k), info[j][k]) < 1e-12);
            }
        }
    }
}

#[test]
fn fifty_row_logistic_example() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let d = random_dataset(Family::Binomial, Link::Logit, 50, 3, &mut rng, 1.0, 1.0);
    let si = score_and_info(&d.data, &d.spec, &pv(&d.spec, &d.beta), 1.0).unwrap();
    let (u, info) = common::score_info(Family::Binomial, Link::Logit, &d.x, &d.y, &d.beta);
    for j in 0..3 {
        assert!(rel_err(si.u[j], u[j]) < 1e-12);
        for k in 0..3 {
            assert!(rel_err(si.info.get(j, k), info[j][k]) < 1e-12);
        }
    }
}

#[test]
fn gaussian_fit_is_least_squares_in_one_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let d = random_dataset(Family::Gaussian, Link::Identity, 200, 4, &mut rng, 2.0, 1.0);
    let fit = irls_fit(&d.data, &d.spec, None).unwrap();
    let ls = common::least_squares(&d.x, &d.y);
    assert_eq!(fit.iterations, 1);
    for (a, b) in fit.beta.values().iter().zip(&ls) {
        assert!(rel_err(*a, *b) < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn all_zero_binomial_is_rejected() {
    let spec = common::numeric_spec(Family::Binomial, Link::Logit, 0);
    let data = SubsampleData::new(spec.labels().unwrap(), vec![1.0; 40], vec![0.0; 40]).unwrap();
    match irls_fit(&data, &spec, None) {
        Err(Error::Separation { .. }) | Err(Error::NonConvergence { .. }) => {}
        other => panic!("expected a boundary failure, got {other:?}"),
    }
}

#[test]
fn logistic_fit_recovers_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(5000);
    let d = random_dataset(Family::Binomial, Link::Logit, 5000, 4, &mut rng, 1.0, 1.0);
    let fit = irls_fit(&d.data, &d.spec, None).unwrap();
    let diff: Vec<f64> = fit.beta.values().iter().zip(&d.beta).map(|(a, b)| a - b).collect();
    let dist = fit.info.quad_form(&diff).unwrap().sqrt();
    assert!(dist < 4.0, "{dist} joint standard errors from the truth");
}

#[test]
fn converged_fits_have_small_score() {
    for (family, link) in canonical_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let d = random_dataset(family, link, 400, 3, &mut rng, 0.5, 0.5);
        let fit = irls_fit(&d.data, &d.spec, None).unwrap();
        let si = score_and_info(&d.data, &d.spec, &fit.beta, 1.0).unwrap();
        let bound = 3.0 * 1e-8 * si.info.diagonal().into_iter().fold(0.0, f64::max);
        assert!(norm_inf(&si.u) < bound, "{family:?}");
        assert_eq!(fit.info, si.info);
        if family.has_dispersion() {
            assert!(fit.phi > 0.0 && fit.phi != 1.0);
        } else {
            assert_eq!(fit.phi, 1.0);
        }
    }
}

#[test]
fn symmetric_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = random_dataset(Family::Gamma, Link::Log, 30, 4, &mut rng, 0.5, 1.0);
    let si = score_and_info(&d.data, &d.spec, &pv(&d.spec, &d.beta), 2.0).unwrap();
    let dense = si.info.to_dense();
    let back = SymMatrix::from_dense(4, &dense).unwrap();
    assert_eq!(back, si.info);
}
