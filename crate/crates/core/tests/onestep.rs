mod common;

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sqlglm::glm::{irls_fit, score_and_info, ParamVector, SubsampleData};
use sqlglm::linalg::{inverse_spd, spectral_norm, SymMatrix};
use sqlglm::onestep::{one_step_update, FitReport, Z_95};
use sqlglm::simbench::{generate_table, CategoricalDesign, SimDesign};
use sqlglm::sql::fetch_all;
use sqlglm::{fit_onestep, report, DbConnection, Family, FitOptions, InfoSource, Link, ReportFormat};

fn pv(values: &[f64]) -> ParamVector {
    ParamVector::new((0..values.len()).map(|i| format!("b{i}")).collect(), values.to_vec()).unwrap()
}

#[test]
fn update_examples() {
    let b = pv(&[0.3, -1.0]);
    let info = SymMatrix::from_dense(2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
    assert_eq!(one_step_update(&b, &[0.0, 0.0], &info).unwrap(), b);
    let id = SymMatrix::identity(2);
    let stepped = one_step_update(&b, &[0.5, -0.5], &id).unwrap();
    assert_eq!(stepped.values(), &[0.8, -1.5]);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for p in [1, 3, 6, 10] {
        let dense = common::random_pd(&mut rng, p);
        let info = SymMatrix::from_fn(p, |i, j| dense[i][j]);
        let u: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let start = pv(&vec![0.1; p]);
        let hat = one_step_update(&start, &u, &info).unwrap();
        let delta: Vec<f64> = hat.values().iter().zip(start.values()).map(|(a, b)| a - b).collect();
        for (lhs, rhs) in common::mat_vec(&dense, &delta).iter().zip(&u) {
            assert!((lhs - rhs).abs() < 1e-8);
        }
    }
}

fn gaussian_table(seed: u64, rows: u64) -> (DbConnection, SimDesign) {
    let mut db = DbConnection::open_in_memory().unwrap();
    let mut design = SimDesign::logistic(rows, vec![1.0, 2.0, -0.5, 0.25, 0.3, -0.3], seed);
    design.family = Family::Gaussian;
    design.link = Link::Identity;
    design.dispersion = 2.0;
    design.numeric.truncate(3);
    design.categorical.push(CategoricalDesign::uniform("g", 3));
    generate_table(&mut db, &design).unwrap();
    (db, design)
}

#[test]
fn gaussian_one_step_is_least_squares() {
    let (db, design) = gaussian_table(4, 20_000);
    let spec = design.model_spec();
    let mut resolved = design.resolved_spec();
    sqlglm::sql::resolve_levels(&db, &mut resolved, 100).unwrap();
    let all = fetch_all(&db, &resolved).unwrap();
    let rows: Vec<Vec<f64>> = (0..all.n()).map(|i| all.row(i).to_vec()).collect();
    let ls = common::least_squares(&rows, all.y());
    for seed in 0..5 {
        let opts = FitOptions {
            info_source: InfoSource::FullData,
            seed: Some(seed),
            ..FitOptions::default()
        };
        let fit = fit_onestep(&db, &spec, &opts).unwrap();
        assert_ne!(fit.beta_tilde.values(), fit.beta_hat.values());
        for (a, b) in fit.beta_hat.values().iter().zip(&ls) {
            assert!(common::rel_err(*a, *b) < 1e-8, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn single_aggregation_per_fit() {
    let (db, design) = gaussian_table(5, 5_000);
    for source in [InfoSource::ScaledSubsample, InfoSource::FullData] {
        db.reset_counts();
        let opts = FitOptions {
            info_source: source,
            seed: Some(1),
            ..FitOptions::default()
        };
        fit_onestep(&db, &design.model_spec(), &opts).unwrap();
        let c = db.statement_counts();
        assert_eq!(c.aggregate, 1);
        assert_eq!(c.count, 1);
        assert_eq!(c.distinct, 1);
        assert_eq!(c.sample, 1);
        assert_eq!(c.fetch, 0);
        assert_eq!(c.total(), 4);
    }
}

fn logistic_fixture() -> (DbConnection, SimDesign) {
    let mut db = DbConnection::open_in_memory().unwrap();
    let mut design = SimDesign::logistic(3_000, vec![-0.5, 0.8, -0.4, 0.6], 42);
    design.numeric.truncate(1);
    design.categorical.push(CategoricalDesign::uniform("c", 3));
    generate_table(&mut db, &design).unwrap();
    (db, design)
}

/// Set `SQLGLM_BLESS=1` to rewrite the golden file after an intended change.
#[test]
fn json_report_golden() {
    let (db, design) = logistic_fixture();
    let opts = FitOptions {
        seed: Some(7),
        ..FitOptions::default()
    };
    let fit = fit_onestep(&db, &design.model_spec(), &opts).unwrap();
    let json = report(&fit, ReportFormat::Json, false);
    let again = report(&fit_onestep(&db, &design.model_spec(), &opts).unwrap(), ReportFormat::Json, false);
    assert_eq!(json, again);

    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/fit_report.json");
    if std::env::var_os("SQLGLM_BLESS").is_some() {
        std::fs::write(&path, &json).unwrap();
    }
    assert_eq!(json, std::fs::read_to_string(&path).expect("golden file present"));

    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    for key in ["coefficients", "n", "N", "phi", "info_source", "warnings", "timings_ms"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    for c in FitReport::new(&fit, false).coefficients {
        assert_eq!(c.ci_low, c.beta_hat - Z_95 * c.se);
        assert_eq!(c.ci_high, c.beta_hat + Z_95 * c.se);
    }
}

#[test]
fn info_source_is_reported() {
    let (db, design) = logistic_fixture();
    for (source, name) in [(InfoSource::FullData, "full_data"), (InfoSource::ScaledSubsample, "scaled_subsample")] {
        let opts = FitOptions {
            info_source: source,
            seed: Some(3),
            ..FitOptions::default()
        };
        let fit = fit_onestep(&db, &design.model_spec(), &opts).unwrap();
        assert_eq!(fit.info_source, source);
        assert!(report(&fit, ReportFormat::Json, false).contains(&format!("\"info_source\": \"{name}\"")));
        for (se, v) in fit.std_errors.iter().zip(fit.covariance.diagonal()) {
            assert_eq!(*se, v.sqrt());
        }
        assert!(fit.n <= fit.total);
    }
}

#[test]
fn absent_rare_level_is_a_warning() {
    let mut db = DbConnection::open_in_memory().unwrap();
    let mut design = SimDesign::logistic(20_000, vec![-0.5, 0.8, 0.3, 0.2, 0.5], 9);
    design.numeric.truncate(1);
    design.categorical.push(CategoricalDesign::with_rare_level("c", 4, 1e-3));
    generate_table(&mut db, &design).unwrap();
    let opts = FitOptions {
        seed: Some(2),
        ..FitOptions::default()
    };
    let fit = fit_onestep(&db, &design.model_spec(), &opts).unwrap();
    assert!(fit.warnings.iter().any(|w| w.contains("c[L03]")), "{:?}", fit.warnings);
    assert_eq!(fit.beta_tilde.values()[4], 0.0);
    assert_ne!(fit.beta_hat.values()[4], 0.0);
    assert_eq!(fit.info_source, InfoSource::FullData);
}

fn logistic_data(n: usize, beta: &[f64], seed: u64) -> (SubsampleData, sqlglm::ModelSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = beta.len();
    let spec = common::numeric_spec(Family::Binomial, Link::Logit, p - 1);
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = vec![1.0];
        row.extend((1..p).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)));
        y.push(common::draw_y(Family::Binomial, common::mu(Link::Logit, common::eta_of(&row, beta)), &mut rng));
        x.extend(row);
    }
    (SubsampleData::new(spec.labels().unwrap(), x, y).unwrap(), spec)
}

#[test]
fn taylor_remainder_stays_bounded() {
    let beta0 = [-0.5, 0.5, -0.25, 0.25];
    let truth = |spec: &sqlglm::ModelSpec| ParamVector::new(spec.labels().unwrap(), beta0.to_vec()).unwrap();
    let mut ratios = Vec::new();
    for total in [10_000usize, 100_000, 1_000_000] {
        let n = (total as f64).powf(5.0 / 9.0).ceil() as usize;
        let mut acc = 0.0;
        let seeds = 4;
        for seed in 0..seeds {
            let (data, spec) = logistic_data(total, &beta0, 100 + seed);
            let tilde = irls_fit(&data.slice(0..n), &spec, None).unwrap().beta;
            let at_truth = score_and_info(&data, &spec, &truth(&spec), 1.0).unwrap();
            let at_tilde = score_and_info(&data, &spec, &tilde, 1.0).unwrap();
            let d: Vec<f64> = tilde.values().iter().zip(&beta0).map(|(a, b)| a - b).collect();
            let id = at_tilde.info.mul_vec(&d).unwrap();
            let rem = (0..4)
                .map(|j| (at_truth.u[j] - at_tilde.u[j] - id[j]).powi(2))
                .sum::<f64>()
                .sqrt();
            let d2: f64 = d.iter().map(|v| v * v).sum();
            acc += rem / (total as f64 * d2);
        }
        ratios.push(acc / seeds as f64);
    }
    // Second-order remainder: the normalised ratio is O(1), not growing with N.
    assert!(ratios.iter().all(|r| r.is_finite() && *r < 1.0), "{ratios:?}");
    assert!(ratios[2] < 3.0 * ratios[0], "{ratios:?}");
}

#[test]
fn scaled_information_converges_to_full() {
    let beta0 = [-0.5, 0.5, -0.25, 0.25];
    let total = 200_000;
    let sizes = [500usize, 5_000, 50_000];
    let seeds = 8;
    let mut mean_norm = vec![0.0; sizes.len()];
    for seed in 0..seeds {
        let (data, spec) = logistic_data(total, &beta0, 900 + seed);
        let beta = ParamVector::new(spec.labels().unwrap(), beta0.to_vec()).unwrap();
        let full = score_and_info(&data, &spec, &beta, 1.0).unwrap().info.to_dense();
        for (k, &n) in sizes.iter().enumerate() {
            let sub = score_and_info(&data.slice(0..n), &spec, &beta, 1.0).unwrap().info;
            let inv = inverse_spd(&sub.scaled(total as f64 / n as f64)).unwrap().to_dense();
            let mut m = vec![0.0; 16];
            for i in 0..4 {
                for j in 0..4 {
                    m[i * 4 + j] = (0..4).map(|l| full[i * 4 + l] * inv[l * 4 + j]).sum::<f64>()
                        - if i == j { 1.0 } else { 0.0 };
                }
            }
            mean_norm[k] += spectral_norm(&m, 4) / seeds as f64;
        }
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = mean_norm.iter().map(|v| v.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!(slope < 0.0, "slope {slope}, norms {mean_norm:?}");
}
