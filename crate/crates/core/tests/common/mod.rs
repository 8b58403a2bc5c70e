//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the crate's numerical code: means, derivatives,
//! log-likelihoods and linear solves are re-derived from scratch.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rusqlite::types::Value;
use sqlglm::{DbConnection, Family, Link};

pub const CLAMP: f64 = 30.0;

pub fn clamp(link: Link, eta: f64) -> f64 {
    match link {
        Link::Identity => eta,
        _ => eta.clamp(-CLAMP, CLAMP),
    }
}

/// Inverse link, written independently of the library.
pub fn mu(link: Link, eta: f64) -> f64 {
    let e = clamp(link, eta);
    match link {
        Link::Logit => {
            if e >= 0.0 {
                1.0 / (1.0 + (-e).exp())
            } else {
                e.exp() / (1.0 + e.exp())
            }
        }
        Link::Log => e.exp(),
        Link::Identity => e,
    }
}

/// Analytic dμ/dη.
pub fn dmu(link: Link, eta: f64) -> f64 {
    let e = clamp(link, eta);
    match link {
        Link::Logit => {
            let m = mu(link, e);
            m * (1.0 - m)
        }
        Link::Log => e.exp(),
        Link::Identity => 1.0,
    }
}

pub fn variance(family: Family, m: f64) -> f64 {
    match family {
        Family::Binomial => m * (1.0 - m),
        Family::Poisson => m,
        Family::Gaussian => 1.0,
        Family::Gamma => m * m,
    }
}

/// Per-row log-likelihood at unit dispersion, dropping terms free of μ.
pub fn loglik_row(family: Family, y: f64, m: f64) -> f64 {
    match family {
        Family::Binomial => y * m.ln() + (1.0 - y) * (1.0 - m).ln(),
        Family::Poisson => y * m.ln() - m,
        Family::Gaussian => -0.5 * (y - m) * (y - m),
        Family::Gamma => -y / m - m.ln(),
    }
}

pub fn eta_of(x: &[f64], beta: &[f64]) -> f64 {
    x.iter().zip(beta).map(|(a, b)| a * b).sum()
}

pub fn loglik(family: Family, link: Link, x: &[Vec<f64>], y: &[f64], beta: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(row, &yi)| loglik_row(family, yi, mu(link, eta_of(row, beta))))
        .sum()
}

/// Brute-force per-row score and expected information, `φ = 1`.
pub fn score_info(family: Family, link: Link, x: &[Vec<f64>], y: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = beta.len();
    let mut u = vec![0.0; p];
    let mut info = vec![vec![0.0; p]; p];
    for (row, &yi) in x.iter().zip(y) {
        let eta = eta_of(row, beta);
        let m = mu(link, eta);
        let d = dmu(link, eta);
        let v = variance(family, m);
        for j in 0..p {
            u[j] += row[j] * d / v * (yi - m);
            for k in 0..p {
                info[j][k] += d * d / v * row[j] * row[k];
            }
        }
    }
    (u, info)
}

/// Gaussian elimination with partial pivoting on a dense row-major system.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &bi)| {
        let mut r = r.clone();
        r.push(bi);
        r
    }).collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, piv);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..=n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}

/// Ordinary least squares via the normal equations.
pub fn least_squares(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (row, &yi) in x.iter().zip(y) {
        for j in 0..p {
            xty[j] += row[j] * yi;
            for k in 0..p {
                xtx[j][k] += row[j] * row[k];
            }
        }
    }
    solve_dense(&xtx, &xty)
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| eta_of(r, x)).collect()
}

/// `GᵀG + I` for a random `p×p` Gaussian `G`.
pub fn random_pd(rng: &mut ChaCha8Rng, p: usize) -> Vec<Vec<f64>> {
    let g: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..p).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    (0..p)
        .map(|i| {
            (0..p)
                .map(|j| (0..p).map(|k| g[k][i] * g[k][j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(a.abs())
    }
}

/// A response drawn from `family` at mean `m`.
pub fn draw_y(family: Family, m: f64, rng: &mut ChaCha8Rng) -> f64 {
    match family {
        Family::Binomial => (rng.random::<f64>() < m) as u8 as f64,
        Family::Poisson => Poisson::new(m.max(1e-9)).unwrap().sample(rng),
        Family::Gaussian => m + 0.7 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng),
        Family::Gamma => Gamma::new(2.0, m / 2.0).unwrap().sample(rng).max(1e-12),
    }
}

pub fn canonical_pairs() -> [(Family, Link); 4] {
    [
        (Family::Binomial, Link::Logit),
        (Family::Poisson, Link::Log),
        (Family::Gaussian, Link::Identity),
        (Family::Gamma, Link::Log),
    ]
}

/// Creates `name(columns...)` and inserts `rows` in one transaction.
pub fn write_table(db: &mut DbConnection, name: &str, columns: &[(&str, &str)], rows: &[Vec<Value>]) {
    let decl: Vec<String> = columns.iter().map(|(c, t)| format!("\"{c}\" {t}")).collect();
    db.execute_batch(&format!("DROP TABLE IF EXISTS \"{name}\"; CREATE TABLE \"{name}\" ({});", decl.join(", ")))
        .unwrap();
    let ph: Vec<String> = (1..=columns.len()).map(|i| format!("?{i}")).collect();
    let sql = format!("INSERT INTO \"{name}\" VALUES ({})", ph.join(", "));
    let tx = db.raw_mut().transaction().unwrap();
    {
        let mut stmt = tx.prepare(&sql).unwrap();
        for r in rows {
            stmt.execute(rusqlite::params_from_iter(r.iter())).unwrap();
        }
    }
    tx.commit().unwrap();
}

/// In-memory data with an intercept and `p − 1` normal predictors.
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub beta: Vec<f64>,
    pub spec: sqlglm::ModelSpec,
    pub data: sqlglm::glm::SubsampleData,
}

pub fn numeric_spec(family: Family, link: Link, k: usize) -> sqlglm::ModelSpec {
    let mut spec = sqlglm::ModelSpec::new("t", sqlglm::Response::Column("y".into()), family, link);
    for j in 1..=k {
        spec = spec.numeric(format!("x{j}"));
    }
    spec
}

/// `beta` entries are uniform on `±beta_scale`; predictors have sd `x_scale`.
pub fn random_dataset(
    family: Family,
    link: Link,
    n: usize,
    p: usize,
    rng: &mut ChaCha8Rng,
    beta_scale: f64,
    x_scale: f64,
) -> Dataset {
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-beta_scale..=beta_scale)).collect();
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut row = vec![1.0];
            row.extend((1..p).map(|_| x_scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)));
            row
        })
        .collect();
    let y: Vec<f64> = x
        .iter()
        .map(|row| {
            let mut m = mu(link, eta_of(row, &beta));
            if family == Family::Gaussian && link == Link::Identity {
                m = eta_of(row, &beta);
            }
            draw_y(family, m, rng)
        })
        .collect();
    let spec = numeric_spec(family, link, p - 1);
    let data = sqlglm::glm::SubsampleData::new(spec.labels().unwrap(), x.concat(), y.clone()).unwrap();
    Dataset { x, y, beta, spec, data }
}
