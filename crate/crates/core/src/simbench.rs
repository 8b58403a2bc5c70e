//! Synthetic tables, the in-database full-data MLE, and replicated
//! one-step-versus-MLE experiments.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{
    Categorical, Family, Link, ModelSpec, ParamVector, Response, Term,
    MAX_ITERATIONS, SCORING_TOL,
};
use crate::linalg::{inverse_spd, SymMatrix};
use crate::onestep::{fit_onestep, one_step_update, FitOptions, InfoSource, Z_95};
use crate::sampler::SampleSpec;
use crate::sql::query::quote_ident;
use crate::sql::{build_score_query, resolve_levels, run_score_query, DbConnection, DEFAULT_MAX_LEVELS};

/// Rows per insert transaction.
pub const INSERT_BATCH: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDesign {
    pub name: String,
    pub levels: usize,
    /// Level probabilities; uniform when absent.
    pub probs: Option<Vec<f64>>,
}

impl CategoricalDesign {
    pub fn uniform(name: impl Into<String>, levels: usize) -> Self {
        Self {
            name: name.into(),
            levels,
            probs: None,
        }
    }

    /// Equal frequencies except the last level, which occurs with probability `rare`.
    pub fn with_rare_level(name: impl Into<String>, levels: usize, rare: f64) -> Self {
        let common = (1.0 - rare) / (levels - 1) as f64;
        let mut probs = vec![common; levels - 1];
        probs.push(rare);
        Self {
            name: name.into(),
            levels,
            probs: Some(probs),
        }
    }

    pub fn level_names(&self) -> Vec<String> {
        let width = (self.levels.saturating_sub(1)).to_string().len().max(2);
        (0..self.levels).map(|i| format!("L{i:0width$}")).collect()
    }

    fn cumulative(&self) -> Vec<f64> {
        let probs = self
            .probs
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.levels as f64; self.levels]);
        let total: f64 = probs.iter().sum();
        let mut acc = 0.0;
        probs
            .iter()
            .map(|p| {
                acc += p / total;
                acc
            })
            .collect()
    }
}

/// A synthetic population: standard-normal numerics, optional categoricals,
/// and a response drawn from the family at `μ = g⁻¹(xᵀβ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub table: String,
    pub rows: u64,
    pub numeric: Vec<String>,
    pub categorical: Vec<CategoricalDesign>,
    /// Intercept, numerics, then indicator coefficients in level order.
    pub beta_true: Vec<f64>,
    pub family: Family,
    pub link: Link,
    /// Gaussian variance or gamma dispersion (1/shape); ignored otherwise.
    pub dispersion: f64,
    pub seed: u64,
}

impl SimDesign {
    /// Logistic design with `k` standard-normal predictors.
    pub fn logistic(rows: u64, beta_true: Vec<f64>, seed: u64) -> Self {
        let k = beta_true.len().saturating_sub(1);
        Self {
            table: "sim".into(),
            rows,
            numeric: (1..=k).map(|i| format!("x{i}")).collect(),
            categorical: Vec::new(),
            beta_true,
            family: Family::Binomial,
            link: Link::Logit,
            dispersion: 1.0,
            seed,
        }
    }

    pub fn expanded_p(&self) -> usize {
        1 + self.numeric.len() + self.categorical.iter().map(|c| c.levels - 1).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta_true.len() != self.expanded_p() {
            return Err(Error::DimensionMismatch {
                expected: self.expanded_p(),
                found: self.beta_true.len(),
            });
        }
        if self.categorical.iter().any(|c| c.levels < 2) {
            return Err(Error::InvalidSpec("categorical predictors need two or more levels".into()));
        }
        if !self.family.supports(self.link) {
            return Err(Error::Unsupported {
                family: self.family,
                link: self.link,
            });
        }
        Ok(())
    }

    /// The model that generated the table, levels left for enumeration.
    pub fn model_spec(&self) -> ModelSpec {
        let mut spec = ModelSpec::new(
            self.table.clone(),
            Response::Column("y".into()),
            self.family,
            self.link,
        );
        for x in &self.numeric {
            spec = spec.numeric(x.clone());
        }
        for c in &self.categorical {
            spec = spec.categorical(c.name.clone());
        }
        spec
    }

    /// Same model with the design's level lists filled in.
    pub fn resolved_spec(&self) -> ModelSpec {
        let mut spec = self.model_spec();
        for (cat, design) in spec.categoricals_mut().into_iter().zip(&self.categorical) {
            cat.levels = design.level_names();
        }
        spec
    }

    pub fn truth(&self) -> Result<ParamVector> {
        ParamVector::new(self.resolved_spec().labels()?, self.beta_true.clone())
    }
}

fn draw_response(design: &SimDesign, mu: f64, rng: &mut ChaCha8Rng) -> f64 {
    match design.family {
        Family::Binomial => (rng.random::<f64>() < mu) as u8 as f64,
        Family::Poisson => Poisson::new(mu).map(|d| d.sample(rng)).unwrap_or(0.0),
        Family::Gaussian => {
            let z: f64 = StandardNormal.sample(rng);
            mu + design.dispersion.sqrt() * z
        }
        Family::Gamma => {
            let shape = 1.0 / design.dispersion;
            Gamma::new(shape, mu / shape)
                .map(|d| d.sample(rng))
                .unwrap_or(mu)
                .max(f64::MIN_POSITIVE)
        }
    }
}

/// Creates (replacing) the design's table and fills it. Deterministic in `seed`.
pub fn generate_table(db: &mut DbConnection, design: &SimDesign) -> Result<String> {
    design.validate()?;
    let table = quote_ident(&design.table);
    let mut columns: Vec<String> = design.numeric.iter().map(|c| format!("{} REAL", quote_ident(c))).collect();
    columns.extend(design.categorical.iter().map(|c| format!("{} TEXT", quote_ident(&c.name))));
    columns.push("\"y\" REAL".into());
    db.execute_batch(&format!(
        "DROP TABLE IF EXISTS {table}; CREATE TABLE {table} ({});",
        columns.join(", ")
    ))?;

    let n_cols = columns.len();
    let placeholders = (1..=n_cols).map(|i| format!("?{i}")).collect::<Vec<_>>().join(", ");
    let insert = format!("INSERT INTO {table} VALUES ({placeholders})");
    let level_names: Vec<Vec<String>> = design.categorical.iter().map(|c| c.level_names()).collect();
    let cumulative: Vec<Vec<f64>> = design.categorical.iter().map(|c| c.cumulative()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let mut numeric = vec![0.0; design.numeric.len()];
    let mut levels = vec![0usize; design.categorical.len()];
    let mut written = 0u64;
    let conn = db.raw_mut();
    while written < design.rows {
        let batch = (design.rows - written).min(INSERT_BATCH as u64);
        let tx = conn.transaction()?;
        {
            let mut stmt = tx.prepare_cached(&insert)?;
            for _ in 0..batch {
                let mut eta = design.beta_true[0];
                let mut j = 1;
                for v in numeric.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                    eta += design.beta_true[j] * *v;
                    j += 1;
                }
                for (c, cum) in cumulative.iter().enumerate() {
                    let u: f64 = rng.random();
                    let level = cum.iter().position(|&q| u < q).unwrap_or(cum.len() - 1);
                    levels[c] = level;
                    if level > 0 {
                        eta += design.beta_true[j + level - 1];
                    }
                    j += cum.len() - 1;
                }
                let mu = design.link.mean_from_eta(eta);
                let y = draw_response(design, mu, &mut rng);
                let mut params: Vec<rusqlite::types::Value> = Vec::with_capacity(n_cols);
                params.extend(numeric.iter().map(|&v| rusqlite::types::Value::Real(v)));
                params.extend(
                    levels
                        .iter()
                        .enumerate()
                        .map(|(c, &l)| rusqlite::types::Value::Text(level_names[c][l].clone())),
                );
                params.push(rusqlite::types::Value::Real(y));
                stmt.execute(rusqlite::params_from_iter(params))?;
            }
        }
        tx.commit()?;
        written += batch;
    }
    Ok(design.table.clone())
}

/// Full-data maximum likelihood computed entirely in the database.
#[derive(Debug, Clone)]
pub struct OracleFit {
    pub beta: ParamVector,
    /// `I_N` at `beta`.
    pub info: SymMatrix,
    /// Fisher-scoring updates taken before the convergence test passed.
    pub iterations: usize,
    pub deviance: f64,
    pub elapsed: Duration,
}

/// Iterates aggregate-then-update until the step max-norm is below `1e-8`.
pub fn full_mle_oracle(db: &DbConnection, spec: &ModelSpec, start: &ParamVector) -> Result<OracleFit> {
    let t = Instant::now();
    let mut spec = spec.clone();
    resolve_levels(db, &mut spec, DEFAULT_MAX_LEVELS)?;
    let mut beta = start.clone();
    let mut last_step = f64::INFINITY;
    for iterations in 0..=MAX_ITERATIONS {
        let plan = build_score_query(&spec, &beta, true, db.dialect())?;
        let si = run_score_query(db, &plan)?;
        let next = one_step_update(&beta, &si.u, &si.info)?;
        last_step = next
            .values()
            .iter()
            .zip(beta.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        beta = next;
        if last_step < SCORING_TOL {
            return Ok(OracleFit {
                beta,
                info: si.info,
                iterations,
                deviance: si.deviance,
                elapsed: t.elapsed(),
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        last_step,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Replicate `r` uses design seed `design.seed + r`.
    pub design: SimDesign,
    pub replicates: usize,
    pub exponents: Vec<f64>,
    pub parallel: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    OnestepFullData,
    OnestepScaledSubsample,
    Mle,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::OnestepFullData => "onestep_full_data",
            Estimator::OnestepScaledSubsample => "onestep_scaled_subsample",
            Estimator::Mle => "mle",
        }
    }

    fn from_source(source: InfoSource) -> Self {
        match source {
            InfoSource::FullData => Estimator::OnestepFullData,
            InfoSource::ScaledSubsample => Estimator::OnestepScaledSubsample,
        }
    }
}

/// One estimate of one coordinate in one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub replicate: usize,
    /// Sampling exponent; absent for the MLE.
    pub exponent: Option<f64>,
    pub estimator: Estimator,
    pub coordinate: usize,
    pub label: String,
    pub estimate: f64,
    pub se: f64,
    pub truth: f64,
    pub n: u64,
    #[serde(rename = "N")]
    pub total: u64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub exponent: Option<f64>,
    pub estimator: Estimator,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateSummary {
    pub label: String,
    pub mse: f64,
    pub mse_mle: f64,
    pub mse_ratio: f64,
    /// Fraction of 95% intervals covering the true value.
    pub coverage: f64,
    /// Fraction of replicates within 0.1 MLE standard errors of the MLE.
    pub within_0_1_se_of_mle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub exponent: f64,
    pub estimator: Estimator,
    pub replicates: usize,
    pub coordinates: Vec<CoordinateSummary>,
    pub mean_elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantAgreement {
    pub exponent: f64,
    pub labels: Vec<String>,
    /// Per coordinate, fraction of replicates where the two one-step variants
    /// differ by less than 0.2 standard errors.
    pub within_0_2_se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub replicates: usize,
    pub total: u64,
    pub estimators: Vec<EstimatorSummary>,
    pub agreement: Vec<VariantAgreement>,
    pub mle_coverage: Vec<f64>,
    pub mean_mle_elapsed_ms: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<EstimateRow>,
    pub failures: Vec<ReplicateFailure>,
    pub summary: ExperimentSummary,
}

impl ExperimentReport {
    pub const CSV_HEADER: &'static str =
        "replicate,exponent,estimator,coordinate,label,estimate,se,truth,n,N,elapsed_ms";

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{:?},{:?},{:?},{},{},{:.3}",
                r.replicate,
                r.exponent.map(|e| format!("{e:?}")).unwrap_or_default(),
                r.estimator.name(),
                r.coordinate,
                r.label,
                r.estimate,
                r.se,
                r.truth,
                r.n,
                r.total,
                r.elapsed_ms
            )?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serialises")
    }

    /// Estimates of `estimator` at `exponent`, indexed `[replicate][coordinate]`
    /// over replicates where every estimator succeeded.
    pub fn matrix(&self, estimator: Estimator, exponent: Option<f64>) -> Vec<Vec<&EstimateRow>> {
        let complete = complete_replicates(self);
        complete
            .iter()
            .map(|&r| {
                let mut row: Vec<&EstimateRow> = self
                    .rows
                    .iter()
                    .filter(|e| e.replicate == r && e.estimator == estimator && e.exponent == exponent)
                    .collect();
                row.sort_by_key(|e| e.coordinate);
                row
            })
            .collect()
    }
}

fn complete_replicates(report: &ExperimentReport) -> Vec<usize> {
    (0..report.config.replicates)
        .filter(|r| !report.failures.iter().any(|f| f.replicate == *r))
        .collect()
}

struct ReplicateOutcome {
    rows: Vec<EstimateRow>,
    failures: Vec<ReplicateFailure>,
}

fn run_replicate(config: &ExperimentConfig, replicate: usize) -> ReplicateOutcome {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut design = config.design.clone();
    design.seed = config.design.seed.wrapping_add(replicate as u64);
    let fail = |exponent, estimator, e: &dyn std::fmt::Display| ReplicateFailure {
        replicate,
        exponent,
        estimator,
        message: e.to_string(),
    };

    let setup = (|| -> Result<(DbConnection, ParamVector)> {
        let mut db = DbConnection::open_in_memory()?;
        generate_table(&mut db, &design)?;
        Ok((db, design.truth()?))
    })();
    let (db, truth) = match setup {
        Ok(v) => v,
        Err(e) => {
            failures.push(fail(None, Estimator::Mle, &e));
            return ReplicateOutcome { rows, failures };
        }
    };
    let spec = design.model_spec();
    let mut mle_start: Option<ParamVector> = None;

    for &exponent in &config.exponents {
        for source in [InfoSource::FullData, InfoSource::ScaledSubsample] {
            let opts = FitOptions {
                sample: SampleSpec::with_exponent(exponent),
                info_source: source,
                seed: Some(design.seed ^ 0x5eed_0000_0000_0000),
                ..FitOptions::default()
            };
            let estimator = Estimator::from_source(source);
            match fit_onestep(&db, &spec, &opts) {
                Ok(fit) => {
                    if mle_start.is_none() {
                        mle_start = Some(fit.beta_hat.clone());
                    }
                    let elapsed = fit.timings.total().as_secs_f64() * 1e3;
                    for (j, label) in fit.beta_hat.labels().iter().enumerate() {
                        rows.push(EstimateRow {
                            replicate,
                            exponent: Some(exponent),
                            estimator,
                            coordinate: j,
                            label: label.clone(),
                            estimate: fit.beta_hat.values()[j],
                            se: fit.std_errors[j],
                            truth: truth.values()[j],
                            n: fit.n,
                            total: fit.total,
                            elapsed_ms: elapsed,
                        });
                    }
                }
                Err(e) => failures.push(fail(Some(exponent), estimator, &e)),
            }
        }
    }

    let start = mle_start.unwrap_or_else(|| ParamVector::zeros(truth.labels().to_vec()));
    match full_mle_oracle(&db, &spec, &start).and_then(|fit| {
        let cov = inverse_spd(&fit.info)?;
        Ok((fit, cov))
    }) {
        Ok((fit, cov)) => {
            // Deviance-based dispersion: equals the Pearson estimate for gaussian.
            let phi = if design.family.has_dispersion() {
                fit.deviance / (design.rows as f64 - truth.len() as f64)
            } else {
                1.0
            };
            for (j, label) in fit.beta.labels().iter().enumerate() {
                rows.push(EstimateRow {
                    replicate,
                    exponent: None,
                    estimator: Estimator::Mle,
                    coordinate: j,
                    label: label.clone(),
                    estimate: fit.beta.values()[j],
                    se: (cov.get(j, j) * phi).sqrt(),
                    truth: truth.values()[j],
                    n: design.rows,
                    total: design.rows,
                    elapsed_ms: fit.elapsed.as_secs_f64() * 1e3,
                });
            }
        }
        Err(e) => failures.push(fail(None, Estimator::Mle, &e)),
    }
    ReplicateOutcome { rows, failures }
}

/// Runs `replicates` independent populations; each is fitted by both one-step
/// variants at every exponent and by the in-database MLE.
pub fn efficiency_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.replicates < 1 {
        return Err(Error::InvalidSpec("an experiment needs at least one replicate".into()));
    }
    config.design.validate()?;
    for &e in &config.exponents {
        SampleSpec::with_exponent(e).validate()?;
    }
    let outcomes: Vec<ReplicateOutcome> = if config.parallel {
        (0..config.replicates)
            .into_par_iter()
            .map(|r| run_replicate(config, r))
            .collect()
    } else {
        (0..config.replicates).map(|r| run_replicate(config, r)).collect()
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        rows.extend(o.rows);
        failures.extend(o.failures);
    }
    let mut report = ExperimentReport {
        config: config.clone(),
        rows,
        failures,
        summary: ExperimentSummary {
            replicates: config.replicates,
            total: config.design.rows,
            estimators: Vec::new(),
            agreement: Vec::new(),
            mle_coverage: Vec::new(),
            mean_mle_elapsed_ms: 0.0,
            failures: 0,
        },
    };
    report.summary = summarise(&report);
    Ok(report)
}

fn covers(row: &EstimateRow) -> bool {
    (row.estimate - row.truth).abs() <= Z_95 * row.se
}

fn summarise(report: &ExperimentReport) -> ExperimentSummary {
    let mle = report.matrix(Estimator::Mle, None);
    let reps = mle.len();
    let p = mle.first().map(|r| r.len()).unwrap_or(0);
    let mean = |f: &dyn Fn(usize) -> f64| -> f64 {
        if reps == 0 {
            f64::NAN
        } else {
            (0..reps).map(f).sum::<f64>() / reps as f64
        }
    };
    let mse_mle: Vec<f64> = (0..p)
        .map(|j| mean(&|r| (mle[r][j].estimate - mle[r][j].truth).powi(2)))
        .collect();
    let mut estimators = Vec::new();
    let mut agreement = Vec::new();
    for &exponent in &report.config.exponents {
        let mut per_variant = Vec::new();
        for est in [Estimator::OnestepFullData, Estimator::OnestepScaledSubsample] {
            let m = report.matrix(est, Some(exponent));
            let coordinates = (0..p)
                .map(|j| {
                    let mse = mean(&|r| (m[r][j].estimate - m[r][j].truth).powi(2));
                    CoordinateSummary {
                        label: mle[0][j].label.clone(),
                        mse,
                        mse_mle: mse_mle[j],
                        mse_ratio: mse / mse_mle[j],
                        coverage: mean(&|r| covers(m[r][j]) as u8 as f64),
                        within_0_1_se_of_mle: mean(&|r| {
                            ((m[r][j].estimate - mle[r][j].estimate).abs() < 0.1 * mle[r][j].se) as u8 as f64
                        }),
                    }
                })
                .collect();
            estimators.push(EstimatorSummary {
                exponent,
                estimator: est,
                replicates: reps,
                coordinates,
                mean_elapsed_ms: mean(&|r| m[r].first().map(|e| e.elapsed_ms).unwrap_or(0.0)),
            });
            per_variant.push(m);
        }
        let (full, scaled) = (&per_variant[0], &per_variant[1]);
        agreement.push(VariantAgreement {
            exponent,
            labels: (0..p).map(|j| mle[0][j].label.clone()).collect(),
            within_0_2_se: (0..p)
                .map(|j| {
                    mean(&|r| {
                        ((full[r][j].estimate - scaled[r][j].estimate).abs() < 0.2 * full[r][j].se) as u8
                            as f64
                    })
                })
                .collect(),
        });
    }
    ExperimentSummary {
        replicates: reps,
        total: report.config.design.rows,
        estimators,
        agreement,
        mle_coverage: (0..p).map(|j| mean(&|r| covers(mle[r][j]) as u8 as f64)).collect(),
        mean_mle_elapsed_ms: mean(&|r| mle[r].first().map(|e| e.elapsed_ms).unwrap_or(0.0)),
        failures: report.failures.len(),
    }
}

/// Builds a resolved categorical term; convenience for callers composing models by hand.
pub fn categorical_term(design: &CategoricalDesign) -> Term {
    Term::Categorical(Categorical {
        column: design.name.clone(),
        levels: design.level_names(),
        reference: None,
    })
}
