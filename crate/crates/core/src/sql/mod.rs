//! Database adapter: population count, level enumeration, subsampling and
//! the full-data score aggregation.

mod connection;
mod dialect;
pub mod query;

pub use connection::{DbConnection, StatementCounts, UNIFORM_FUNCTION};
pub use dialect::{Dialect, DialectKind};
pub use query::{build_score_query, QueryPlan};

use connection::StatementKind;
use rusqlite::types::ValueRef;

use crate::error::{Error, Result};
use crate::glm::{DesignEvaluator, ModelSpec, RawKind, RawValue, ScoreInfo, SubsampleData};
use crate::linalg::SymMatrix;
use crate::sampler::SampleMethod;

/// Default cap on distinct values of a categorical column.
pub const DEFAULT_MAX_LEVELS: usize = 1000;

fn ensure_table(db: &DbConnection, table: &str) -> Result<()> {
    if db.table_exists(table)? {
        Ok(())
    } else {
        Err(Error::Database(rusqlite::Error::SqliteFailure(
            rusqlite::ffi::Error::new(rusqlite::ffi::SQLITE_ERROR),
            Some(format!("no such table: {table}")),
        )))
    }
}

/// Rows passing the filter with no NULL model column.
pub fn count_rows(db: &DbConnection, spec: &ModelSpec) -> Result<u64> {
    ensure_table(db, &spec.table)?;
    db.record(StatementKind::Count);
    let n: i64 = db
        .raw()
        .query_row(&query::count_query(spec), [], |r| r.get(0))?;
    Ok(n as u64)
}

/// Sorted distinct values of `column` over the whole modelling population.
pub fn enumerate_levels(
    db: &DbConnection,
    spec: &ModelSpec,
    column: &str,
    max_levels: usize,
) -> Result<Vec<String>> {
    ensure_table(db, &spec.table)?;
    db.record(StatementKind::Distinct);
    let sql = query::distinct_query(spec, column, max_levels + 1);
    let mut stmt = db.raw().prepare(&sql)?;
    let mut levels = stmt
        .query_map([], |r| r.get::<_, String>(0))?
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if levels.len() > max_levels {
        return Err(Error::TooManyLevels {
            column: column.to_string(),
            count: levels.len(),
            limit: max_levels,
        });
    }
    if levels.len() < 2 {
        return Err(Error::TooFewLevels {
            column: column.to_string(),
            count: levels.len(),
        });
    }
    levels.sort();
    Ok(levels)
}

/// Fills in empty level lists of every categorical term. Returns the columns enumerated.
pub fn resolve_levels(db: &DbConnection, spec: &mut ModelSpec, max_levels: usize) -> Result<Vec<String>> {
    let pending: Vec<String> = spec
        .categoricals()
        .into_iter()
        .filter(|c| !c.is_resolved())
        .map(|c| c.column.clone())
        .collect();
    let mut done: Vec<(String, Vec<String>)> = Vec::new();
    for column in &pending {
        if done.iter().any(|(c, _)| c == column) {
            continue;
        }
        let levels = enumerate_levels(db, spec, column, max_levels)?;
        done.push((column.clone(), levels));
    }
    for cat in spec.categoricals_mut() {
        if let Some((_, levels)) = done.iter().find(|(c, _)| *c == cat.column) {
            if !cat.is_resolved() {
                cat.levels = levels.clone();
            }
        }
    }
    Ok(done.into_iter().map(|(c, _)| c).collect())
}

fn read_raw_rows(db: &DbConnection, spec: &ModelSpec, sql: &str) -> Result<SubsampleData> {
    let evaluator = DesignEvaluator::new(spec)?;
    let kinds: Vec<RawKind> = spec.raw_columns().into_iter().map(|(_, k)| k).collect();
    let mut stmt = db.raw().prepare(sql)?;
    let mut rows = stmt.query([])?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut buf: Vec<RawValue> = Vec::with_capacity(kinds.len());
    while let Some(row) = rows.next()? {
        buf.clear();
        for (i, kind) in kinds.iter().enumerate() {
            let v = row.get_ref(i)?;
            buf.push(match (kind, v) {
                (RawKind::Numeric, ValueRef::Integer(n)) => RawValue::Num(n as f64),
                (RawKind::Numeric, ValueRef::Real(f)) => RawValue::Num(f),
                (_, ValueRef::Text(t)) => RawValue::Text(String::from_utf8_lossy(t).into_owned()),
                (RawKind::Text, ValueRef::Integer(n)) => RawValue::Text(n.to_string()),
                (RawKind::Text, ValueRef::Real(f)) => RawValue::Text(f.to_string()),
                (_, other) => {
                    return Err(Error::InvalidSpec(format!(
                        "unexpected {:?} value in model column {i}",
                        other.data_type()
                    )))
                }
            });
        }
        y.push(evaluator.eval_row(&buf, &mut x)?);
    }
    SubsampleData::new(evaluator.labels().to_vec(), x, y)
}

/// Draws the subsample and materialises its design matrix.
///
/// Bernoulli sampling keeps each row with probability `n_target / total`, so the
/// realised size varies around `n_target`.
pub fn sample_rows(
    db: &DbConnection,
    spec: &ModelSpec,
    method: SampleMethod,
    n_target: u64,
    total: u64,
    seed: Option<u64>,
) -> Result<SubsampleData> {
    if n_target == 0 || n_target > total {
        return Err(Error::InvalidSpec(format!(
            "sample target {n_target} must be in 1..={total}"
        )));
    }
    ensure_table(db, &spec.table)?;
    db.reseed(seed);
    db.record(StatementKind::Sample);
    let sql = query::sample_query(spec, db.dialect(), method, n_target, total);
    let data = read_raw_rows(db, spec, &sql)?;
    let required = (10 * data.p()).max(crate::sampler::DEFAULT_FLOOR as usize);
    if data.n() < required {
        return Err(Error::SampleTooSmall {
            realised: data.n(),
            required,
        });
    }
    Ok(data)
}

/// Materialises every population row; used by oracles and small in-memory fits.
pub fn fetch_all(db: &DbConnection, spec: &ModelSpec) -> Result<SubsampleData> {
    ensure_table(db, &spec.table)?;
    db.record(StatementKind::Fetch);
    read_raw_rows(db, spec, &query::fetch_all_query(spec))
}

/// Executes a score plan: one statement, one result row.
pub fn run_score_query(db: &DbConnection, plan: &QueryPlan) -> Result<ScoreInfo> {
    db.record(StatementKind::Aggregate);
    let values: Vec<Option<f64>> = db.raw().query_row(&plan.sql, [], |row| {
        (0..plan.columns.len())
            .map(|i| row.get::<_, Option<f64>>(i))
            .collect()
    })?;
    let p = plan.p();
    let n_idx = plan.columns.len() - 2;
    let n_rows = values[n_idx].unwrap_or(0.0) as u64;
    let get = |i: usize| -> Result<f64> {
        match values[i] {
            Some(v) if v.is_finite() => Ok(v),
            None if n_rows == 0 => Ok(0.0),
            _ => Err(Error::NonFiniteAggregate {
                column: plan.columns[i].clone(),
            }),
        }
    };
    let mut u = Vec::with_capacity(p);
    for j in 0..p {
        u.push(get(j)?);
    }
    let mut info = SymMatrix::zeros(p);
    if plan.with_info {
        let mut idx = p;
        for j in 0..p {
            for k in j..p {
                info.set(j, k, get(idx)?);
                idx += 1;
            }
        }
    }
    let deviance = get(n_idx + 1)?;
    Ok(ScoreInfo {
        u,
        info,
        n_rows,
        deviance,
    })
}
