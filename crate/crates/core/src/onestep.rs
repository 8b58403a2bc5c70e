//! The two-query estimator: fit a random subsample in memory, then take one
//! Fisher-scoring step using the score aggregated over every row.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{irls_fit, IrlsFit, ModelSpec, ParamVector};
use crate::linalg::{inverse_spd, solve_spd, SymMatrix};
use crate::sampler::{choose_subsample_size, SampleSpec};
use crate::sql::{
    build_score_query, count_rows, resolve_levels, run_score_query, sample_rows, DbConnection,
    DEFAULT_MAX_LEVELS,
};

/// Which information matrix the update inverts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoSource {
    /// `I_N(β̃)`, aggregated over all rows alongside the score.
    FullData,
    /// `(N/n)·I_n(β̃)`, scaled up from the subsample.
    ScaledSubsample,
}

impl InfoSource {
    pub fn name(self) -> &'static str {
        match self {
            InfoSource::FullData => "full_data",
            InfoSource::ScaledSubsample => "scaled_subsample",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub sample: SampleSpec,
    pub info_source: InfoSource,
    pub seed: Option<u64>,
    /// Report the full-data deviance at `β̃` (it rides along in the aggregation query).
    pub compute_deviance: bool,
    pub max_levels: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            sample: SampleSpec::default(),
            info_source: InfoSource::ScaledSubsample,
            seed: None,
            compute_deviance: true,
            max_levels: DEFAULT_MAX_LEVELS,
        }
    }
}

/// Wall time per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub count: Duration,
    pub sample: Duration,
    pub subfit: Duration,
    pub aggregate: Duration,
    pub update: Duration,
}

impl Timings {
    pub fn total(&self) -> Duration {
        self.count + self.sample + self.subfit + self.aggregate + self.update
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta_tilde: ParamVector,
    pub beta_hat: ParamVector,
    pub covariance: SymMatrix,
    pub std_errors: Vec<f64>,
    /// Realised subsample size.
    pub n: u64,
    /// Population size.
    pub total: u64,
    pub phi: f64,
    pub info_source: InfoSource,
    pub warnings: Vec<String>,
    pub timings: Timings,
    /// Subsample Fisher-scoring iterations.
    pub iterations: usize,
    /// Full-data deviance at `β̃`.
    pub deviance: Option<f64>,
}

/// Mahalanobis distance between `β̂` and `β̃`, in joint standard errors of
/// the subsample fit, above which a warning is attached.
pub const DISCREPANCY_WARNING: f64 = 5.0;

/// `β̃ + info⁻¹ u`.
pub fn one_step_update(beta_tilde: &ParamVector, u: &[f64], info: &SymMatrix) -> Result<ParamVector> {
    if u.len() != beta_tilde.len() || info.dim() != beta_tilde.len() {
        return Err(Error::DimensionMismatch {
            expected: beta_tilde.len(),
            found: if u.len() != beta_tilde.len() { u.len() } else { info.dim() },
        });
    }
    let delta = solve_spd(info, u)?;
    beta_tilde.with_values(
        beta_tilde
            .values()
            .iter()
            .zip(&delta)
            .map(|(b, d)| b + d)
            .collect(),
    )
}

/// Runs the full estimator against `spec.table`.
pub fn fit_onestep(db: &DbConnection, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    opts.sample.validate()?;
    let mut timings = Timings::default();
    let mut warnings = Vec::new();

    let t = Instant::now();
    let mut spec = spec.clone();
    resolve_levels(db, &mut spec, opts.max_levels)?;
    spec.validate()?;
    let p = spec.n_params()?;
    let total = count_rows(db, &spec)?;
    timings.count = t.elapsed();
    if total <= p as u64 {
        return Err(Error::TooFewRows {
            rows: total,
            params: p,
        });
    }

    let t = Instant::now();
    let n_target = choose_subsample_size(total, &opts.sample, p);
    let sub = sample_rows(db, &spec, opts.sample.method, n_target, total, opts.seed)?;
    timings.sample = t.elapsed();
    // Columns identically zero in the subsample (typically absent rare levels)
    // are left out of the subsample fit; their coefficients start at zero and
    // the update then needs the full-data information.
    let zero = sub.zero_columns();
    for &j in &zero {
        warnings.push(format!(
            "column {} is zero throughout the subsample; its coefficient starts at 0",
            sub.labels()[j]
        ));
    }

    let t = Instant::now();
    let start = if zero.is_empty() {
        irls_fit(&sub, &spec, None)?
    } else {
        let keep: Vec<usize> = (0..p).filter(|j| !zero.contains(j)).collect();
        if keep.is_empty() {
            return Err(Error::RankDeficient { pivot: 0, value: 0.0 });
        }
        let reduced = irls_fit(&sub.select_columns(&keep), &spec, None)?;
        let mut values = vec![0.0; p];
        let mut info = SymMatrix::zeros(p);
        for (a, &ja) in keep.iter().enumerate() {
            values[ja] = reduced.beta.values()[a];
            for (b, &jb) in keep.iter().enumerate().take(a + 1) {
                info.set(ja, jb, reduced.info.get(a, b));
            }
        }
        IrlsFit {
            beta: ParamVector::new(sub.labels().to_vec(), values)?,
            info,
            ..reduced
        }
    };
    timings.subfit = t.elapsed();
    let n = sub.n() as u64;

    let info_source = if zero.is_empty() {
        opts.info_source
    } else {
        if opts.info_source == InfoSource::ScaledSubsample {
            warnings.push("information aggregated over the full data because the subsample information is singular".into());
        }
        InfoSource::FullData
    };

    let t = Instant::now();
    let with_info = info_source == InfoSource::FullData;
    let plan = build_score_query(&spec, &start.beta, with_info, db.dialect())?;
    let full = run_score_query(db, &plan)?;
    timings.aggregate = t.elapsed();
    if full.n_rows != total {
        warnings.push(format!(
            "aggregation saw {} rows but the population count was {total}",
            full.n_rows
        ));
    }

    let t = Instant::now();
    let info = match info_source {
        InfoSource::FullData => full.info.clone(),
        InfoSource::ScaledSubsample => start.info.scaled(total as f64 / n as f64),
    };
    let beta_hat = one_step_update(&start.beta, &full.u, &info)?;
    let covariance = inverse_spd(&info)?.scaled(start.phi);
    let std_errors: Vec<f64> = covariance.diagonal().iter().map(|v| v.sqrt()).collect();
    let diff: Vec<f64> = beta_hat
        .values()
        .iter()
        .zip(start.beta.values())
        .map(|(a, b)| a - b)
        .collect();
    let distance = (start.info.quad_form(&diff)? / start.phi).sqrt();
    if distance > DISCREPANCY_WARNING {
        warnings.push(format!(
            "one-step update moved {distance:.1} joint standard errors from the subsample estimate; the subsample may be unrepresentative"
        ));
    }
    timings.update = t.elapsed();

    Ok(FitResult {
        beta_tilde: start.beta,
        beta_hat,
        covariance,
        std_errors,
        n,
        total,
        phi: start.phi,
        info_source,
        warnings,
        timings,
        iterations: start.iterations,
        deviance: opts.compute_deviance.then_some(full.deviance),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidSpec(format!("unknown output format {other:?}"))),
        }
    }
}

/// z quantile for two-sided 95% intervals.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub label: String,
    pub beta_tilde: f64,
    pub beta_hat: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingsMs {
    pub count: f64,
    pub sample: f64,
    pub subfit: f64,
    pub aggregate: f64,
    pub update: f64,
}

/// Serialised shape of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub coefficients: Vec<CoefficientRow>,
    pub n: u64,
    #[serde(rename = "N")]
    pub total: u64,
    pub phi: f64,
    pub info_source: InfoSource,
    pub warnings: Vec<String>,
    pub timings_ms: TimingsMs,
}

impl FitReport {
    /// With `include_timings = false` all timings are zero, making output
    /// reproducible byte for byte.
    pub fn new(result: &FitResult, include_timings: bool) -> Self {
        let coefficients = result
            .beta_hat
            .labels()
            .iter()
            .enumerate()
            .map(|(j, label)| {
                let b = result.beta_hat.values()[j];
                let se = result.std_errors[j];
                CoefficientRow {
                    label: label.clone(),
                    beta_tilde: result.beta_tilde.values()[j],
                    beta_hat: b,
                    se,
                    ci_low: b - Z_95 * se,
                    ci_high: b + Z_95 * se,
                }
            })
            .collect();
        let ms = |d: Duration| {
            if include_timings {
                d.as_secs_f64() * 1e3
            } else {
                0.0
            }
        };
        Self {
            coefficients,
            n: result.n,
            total: result.total,
            phi: result.phi,
            info_source: result.info_source,
            warnings: result.warnings.clone(),
            timings_ms: TimingsMs {
                count: ms(result.timings.count),
                sample: ms(result.timings.sample),
                subfit: ms(result.timings.subfit),
                aggregate: ms(result.timings.aggregate),
                update: ms(result.timings.update),
            },
        }
    }
}

/// Renders a fit as a text table, JSON document or CSV.
pub fn report(result: &FitResult, format: ReportFormat, include_timings: bool) -> String {
    let rep = FitReport::new(result, include_timings);
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&rep).expect("report serialises");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut s = String::from("label,beta_tilde,beta_hat,se,ci_low,ci_high\n");
            for c in &rep.coefficients {
                let _ = writeln!(
                    s,
                    "{},{:?},{:?},{:?},{:?},{:?}",
                    csv_field(&c.label),
                    c.beta_tilde,
                    c.beta_hat,
                    c.se,
                    c.ci_low,
                    c.ci_high
                );
            }
            s
        }
        ReportFormat::Text => render_text(&rep, include_timings),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_text(rep: &FitReport, include_timings: bool) -> String {
    let width = rep
        .coefficients
        .iter()
        .map(|c| c.label.len())
        .max()
        .unwrap_or(0)
        .max(11);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "", "beta_tilde", "beta_hat", "SE", "95% low", "95% high"
    );
    for c in &rep.coefficients {
        let _ = writeln!(
            s,
            "{:<width$} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            c.label, c.beta_tilde, c.beta_hat, c.se, c.ci_low, c.ci_high
        );
    }
    let _ = writeln!(
        s,
        "\nsubsample n = {}, N = {}, dispersion = {:.6}, information = {}",
        rep.n,
        rep.total,
        rep.phi,
        rep.info_source.name()
    );
    if include_timings {
        let t = &rep.timings_ms;
        let _ = writeln!(
            s,
            "time (ms): count {:.1}, sample {:.1}, subsample fit {:.1}, aggregate {:.1}, update {:.1}",
            t.count, t.sample, t.subfit, t.aggregate, t.update
        );
    }
    for w in &rep.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}
