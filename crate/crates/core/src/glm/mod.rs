//! Families, links and in-memory Fisher scoring.
//!
//! The functions here are the exact reference for the SQL path: the score
//! `U(β) = Σ x_i w_i (y_i − μ_i)` and expected information
//! `I(β) = Σ v_i x_i x_iᵀ` are accumulated row by row with the same clamping
//! the generated SQL applies.

mod family;
mod link;
mod model;

pub use family::Family;
pub use link::{Link, ETA_CLAMP};
pub use model::{
    Categorical, DesignColumn, DesignEvaluator, Factor, ModelSpec, ParamVector, RawKind, RawValue,
    Response, SubsampleData, Term, INTERCEPT_LABEL,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_spd, SymMatrix};

/// Convergence tolerance on the max-norm of a Fisher-scoring step.
pub const SCORING_TOL: f64 = 1e-8;
/// Iteration cap for Fisher scoring.
pub const MAX_ITERATIONS: usize = 25;
/// Binomial fits with any `|η_i|` beyond this at convergence are rejected.
pub const SEPARATION_BOUND: f64 = 25.0;

/// Score weight `w` and information weight `v` at `eta`.
///
/// `w = μ'/(V(μ)φ)` and `v = μ'²/(V(μ)φ)`; canonical pairs return `w = 1/φ`
/// exactly.
pub fn score_weights(family: Family, link: Link, eta: f64, phi: f64) -> Result<(f64, f64)> {
    let mu = link.mean_from_eta(eta);
    if !family.valid_mean(mu) {
        return Err(Error::Domain { family, link, mu });
    }
    Ok(weights_at_mean(family, link, mu, phi))
}

#[inline]
fn weights_at_mean(family: Family, link: Link, mu: f64, phi: f64) -> (f64, f64) {
    let d = link.mu_eta_from_mean(mu);
    let var = family.variance(mu);
    if family.is_canonical(link) {
        // μ' = V(μ), so w is exactly one and v = μ'.
        (1.0 / phi, d / phi)
    } else {
        (d / (var * phi), d * d / (var * phi))
    }
}

/// Accumulated score, information, row count and deviance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreInfo {
    pub u: Vec<f64>,
    pub info: SymMatrix,
    pub n_rows: u64,
    pub deviance: f64,
}

impl ScoreInfo {
    pub fn zeros(p: usize) -> Self {
        Self {
            u: vec![0.0; p],
            info: SymMatrix::zeros(p),
            n_rows: 0,
            deviance: 0.0,
        }
    }

    pub fn p(&self) -> usize {
        self.u.len()
    }

    /// Field-wise sum; partitions of a data set combine this way.
    pub fn merge(&self, other: &ScoreInfo) -> Result<ScoreInfo> {
        if other.p() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: other.p(),
            });
        }
        Ok(ScoreInfo {
            u: self.u.iter().zip(&other.u).map(|(a, b)| a + b).collect(),
            info: self.info.add(&other.info)?,
            n_rows: self.n_rows + other.n_rows,
            deviance: self.deviance + other.deviance,
        })
    }
}

fn check_dims(data: &SubsampleData, beta: &ParamVector) -> Result<()> {
    if data.p() != beta.len() {
        return Err(Error::DimensionMismatch {
            expected: beta.len(),
            found: data.p(),
        });
    }
    Ok(())
}

fn linear_predictor(row: &[f64], beta: &[f64]) -> f64 {
    row.iter().zip(beta).map(|(x, b)| x * b).sum()
}

fn validate_responses(data: &SubsampleData, family: Family) -> Result<()> {
    match data.y().iter().position(|&y| !family.valid_response(y)) {
        Some(row) => Err(Error::InvalidResponse {
            row,
            value: data.y()[row],
            family,
        }),
        None => Ok(()),
    }
}

/// Exact in-memory score and expected information at `beta`.
pub fn score_and_info(
    data: &SubsampleData,
    spec: &ModelSpec,
    beta: &ParamVector,
    phi: f64,
) -> Result<ScoreInfo> {
    check_dims(data, beta)?;
    validate_responses(data, spec.family)?;
    let (family, link) = (spec.family, spec.link);
    let p = data.p();
    let b = beta.values();
    let mut out = ScoreInfo::zeros(p);
    for i in 0..data.n() {
        let x = data.row(i);
        let y = data.y()[i];
        let eta = linear_predictor(x, b);
        let mu = link.mean_from_eta(eta);
        if !family.valid_mean(mu) {
            return Err(Error::Domain { family, link, mu });
        }
        let (w, v) = weights_at_mean(family, link, mu, phi);
        let r = w * (y - mu);
        for j in 0..p {
            out.u[j] += x[j] * r;
            let vx = v * x[j];
            for k in 0..=j {
                out.info.add_to(j, k, vx * x[k]);
            }
        }
        out.deviance += family.unit_deviance(y, mu);
    }
    out.n_rows = data.n() as u64;
    Ok(out)
}

/// Total deviance at `beta`.
pub fn deviance(data: &SubsampleData, spec: &ModelSpec, beta: &ParamVector) -> Result<f64> {
    check_dims(data, beta)?;
    validate_responses(data, spec.family)?;
    Ok((0..data.n())
        .map(|i| {
            let mu = spec.link.mean_from_eta(linear_predictor(data.row(i), beta.values()));
            spec.family.unit_deviance(data.y()[i], mu)
        })
        .sum())
}

/// Pearson dispersion estimate `Σ (y−μ)²/V(μ) / (n−p)`; 1 for fixed-dispersion families.
pub fn pearson_dispersion(data: &SubsampleData, spec: &ModelSpec, beta: &ParamVector) -> Result<f64> {
    check_dims(data, beta)?;
    if !spec.family.has_dispersion() {
        return Ok(1.0);
    }
    let (n, p) = (data.n(), data.p());
    if n <= p {
        return Err(Error::TooFewRows {
            rows: n as u64,
            params: p,
        });
    }
    let chi2: f64 = (0..n)
        .map(|i| {
            let mu = spec.link.mean_from_eta(linear_predictor(data.row(i), beta.values()));
            let r = data.y()[i] - mu;
            r * r / spec.family.variance(mu)
        })
        .sum();
    Ok(chi2 / (n - p) as f64)
}

/// Subsample maximum-likelihood fit.
#[derive(Debug, Clone)]
pub struct IrlsFit {
    pub beta: ParamVector,
    /// Information at `beta` with `φ = 1`.
    pub info: SymMatrix,
    pub phi: f64,
    /// Fisher-scoring updates taken before the convergence test passed.
    pub iterations: usize,
    pub deviance: f64,
}

/// `β = 0` with the intercept at `g(ȳ)`, the mean pulled inside the family's range.
pub fn starting_values(data: &SubsampleData, spec: &ModelSpec) -> ParamVector {
    let mut values = vec![0.0; data.p()];
    if let Some(j) = data.labels().iter().position(|l| l == INTERCEPT_LABEL) {
        let n = data.n().max(1) as f64;
        let ybar = data.y().iter().sum::<f64>() / n;
        let mu = match spec.family {
            Family::Binomial => ybar.clamp(1e-6, 1.0 - 1e-6),
            Family::Poisson | Family::Gamma => ybar.max(1e-6),
            Family::Gaussian => ybar,
        };
        let eta = spec.link.link(mu);
        values[j] = if eta.is_finite() { spec.link.clamp_eta(eta) } else { 0.0 };
    }
    ParamVector::zeros(data.labels().to_vec())
        .with_values(values)
        .expect("finite starting values")
}

fn max_abs_eta(data: &SubsampleData, beta: &[f64]) -> f64 {
    (0..data.n())
        .map(|i| linear_predictor(data.row(i), beta).abs())
        .fold(0.0, f64::max)
}

/// Fisher scoring on in-memory data.
pub fn irls_fit(data: &SubsampleData, spec: &ModelSpec, start: Option<&ParamVector>) -> Result<IrlsFit> {
    let (n, p) = (data.n(), data.p());
    if n <= p {
        return Err(Error::TooFewRows {
            rows: n as u64,
            params: p,
        });
    }
    let mut beta = match start {
        Some(s) => {
            check_dims(data, s)?;
            s.clone()
        }
        None => starting_values(data, spec),
    };
    let mut iterations = 0;
    let mut converged = false;
    let mut last_step = f64::INFINITY;
    for _ in 0..=MAX_ITERATIONS {
        let si = score_and_info(data, spec, &beta, 1.0)?;
        let step = solve_spd(&si.info, &si.u)?;
        last_step = step.iter().fold(0.0, |m: f64, s| m.max(s.abs()));
        let next: Vec<f64> = beta.values().iter().zip(&step).map(|(b, s)| b + s).collect();
        beta = beta.with_values(next)?;
        if last_step < SCORING_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        if iterations >= MAX_ITERATIONS {
            break;
        }
    }
    let binomial_eta = (spec.family == Family::Binomial).then(|| max_abs_eta(data, beta.values()));
    if !converged {
        if let Some(max_eta) = binomial_eta.filter(|m| *m > SEPARATION_BOUND) {
            return Err(Error::Separation {
                max_eta,
                bound: SEPARATION_BOUND,
            });
        }
        return Err(Error::NonConvergence {
            iterations,
            last_step,
        });
    }
    if let Some(max_eta) = binomial_eta.filter(|m| *m > SEPARATION_BOUND) {
        return Err(Error::Separation {
            max_eta,
            bound: SEPARATION_BOUND,
        });
    }
    let at = score_and_info(data, spec, &beta, 1.0)?;
    let diag_scale = at.info.diagonal().into_iter().fold(0.0, f64::max);
    let u_max = at.u.iter().fold(0.0, |m: f64, u| m.max(u.abs()));
    if u_max > p as f64 * SCORING_TOL * diag_scale {
        return Err(Error::NonConvergence {
            iterations,
            last_step,
        });
    }
    let phi = pearson_dispersion(data, spec, &beta)?;
    Ok(IrlsFit {
        beta,
        info: at.info,
        phi,
        iterations,
        deviance: at.deviance,
    })
}
