//! SQL text generation.
//!
//! Every expression here mirrors the arithmetic of [`crate::glm`] operation
//! for operation, including the clamp on the linear predictor, so that the
//! database and the in-memory reference agree to rounding.

use serde::{Deserialize, Serialize};

use super::dialect::{Dialect, DialectKind};
use crate::error::{Error, Result};
use crate::glm::{DesignColumn, Factor, Family, Link, ModelSpec, ParamVector, RawKind, Response, ETA_CLAMP};
use crate::sampler::SampleMethod;

/// Double-quoted identifier with embedded quotes doubled.
pub fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

/// Single-quoted string literal.
pub fn quote_literal(value: &str) -> String {
    format!("'{}'", value.replace('\'', "''"))
}

/// Shortest round-tripping decimal form of a finite float, parenthesised when negative.
pub fn float_literal(value: f64) -> String {
    let s = format!("{value:?}");
    if value.is_sign_negative() {
        format!("({s})")
    } else {
        s
    }
}

fn indicator_sql(column: &str, level: &str) -> String {
    format!(
        "(CASE WHEN CAST({} AS TEXT) = {} THEN 1.0 ELSE 0.0 END)",
        quote_ident(column),
        quote_literal(level)
    )
}

fn factor_sql(factor: &Factor) -> String {
    match factor {
        Factor::Numeric(c) => quote_ident(c),
        Factor::Indicator { column, level } => indicator_sql(column, level),
    }
}

/// SQL expression for one design column.
pub fn design_column_sql(col: &DesignColumn) -> String {
    if col.factors.is_empty() {
        "1.0".to_string()
    } else {
        col.factors.iter().map(factor_sql).collect::<Vec<_>>().join(" * ")
    }
}

pub fn response_sql(response: &Response) -> String {
    match response {
        Response::Column(c) => quote_ident(c),
        Response::Indicator { column, level } => indicator_sql(column, level),
    }
}

/// Rows in the modelling population: the user filter plus NOT NULL guards on
/// every model column.
pub fn population_predicate(spec: &ModelSpec) -> String {
    let mut seen: Vec<&str> = Vec::new();
    let raw = spec.raw_columns();
    for (c, _) in &raw {
        if !seen.contains(&c.as_str()) {
            seen.push(c);
        }
    }
    let mut parts: Vec<String> = seen
        .iter()
        .map(|c| format!("{} IS NOT NULL", quote_ident(c)))
        .collect();
    if let Some(f) = &spec.filter {
        parts.push(format!("({f})"));
    }
    parts.join(" AND ")
}

fn clamped(link: Link, eta: &str) -> String {
    match link {
        Link::Identity => eta.to_string(),
        Link::Logit | Link::Log => {
            let c = float_literal(ETA_CLAMP);
            let nc = float_literal(-ETA_CLAMP);
            format!("(CASE WHEN {eta} > {c} THEN {c} WHEN {eta} < {nc} THEN {nc} ELSE {eta} END)")
        }
    }
}

fn mean_sql(link: Link, eta: &str) -> String {
    let e = clamped(link, eta);
    match link {
        Link::Logit => format!("1.0 / (1.0 + EXP(-{e}))"),
        Link::Log => format!("EXP({e})"),
        Link::Identity => e,
    }
}

/// `(w·(y − μ), v)` with `φ = 1`.
fn contribution_sql(family: Family, link: Link) -> Result<(String, String)> {
    Ok(match (family, link) {
        (Family::Binomial, Link::Logit) => ("(y - mu)".into(), "mu * (1.0 - mu)".into()),
        (Family::Poisson, Link::Log) => ("(y - mu)".into(), "mu".into()),
        (Family::Gaussian, Link::Identity) => ("(y - mu)".into(), "1.0".into()),
        (Family::Gamma, Link::Log) => ("(mu / (mu * mu)) * (y - mu)".into(), "1.0".into()),
        (family, link) => return Err(Error::Unsupported { family, link }),
    })
}

fn deviance_sql(family: Family) -> &'static str {
    match family {
        Family::Binomial => "-2.0 * (y * LN(mu) + (1.0 - y) * LN(1.0 - mu))",
        Family::Poisson => "2.0 * ((CASE WHEN y > 0 THEN y * LN(y / mu) ELSE 0.0 END) - (y - mu))",
        Family::Gaussian => "(y - mu) * (y - mu)",
        Family::Gamma => "2.0 * (-LN(y / mu) + (y - mu) / mu)",
    }
}

/// One aggregation statement and the names of its output columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub sql: String,
    pub columns: Vec<String>,
    pub labels: Vec<String>,
    pub with_info: bool,
}

impl QueryPlan {
    pub fn p(&self) -> usize {
        self.labels.len()
    }
}

/// Builds the single aggregation query for `U(β)` and optionally `I(β)`.
pub fn build_score_query(
    spec: &ModelSpec,
    beta: &ParamVector,
    with_info: bool,
    dialect: &Dialect,
) -> Result<QueryPlan> {
    let (r_expr, v_expr) = contribution_sql(spec.family, spec.link)?;
    spec.validate()?;
    let design = spec.design()?;
    let labels: Vec<String> = design.iter().map(|c| c.label.clone()).collect();
    if labels.as_slice() != beta.labels() {
        return Err(Error::InvalidSpec(format!(
            "coefficient labels {:?} do not match the model's design columns {:?}",
            beta.labels(),
            labels
        )));
    }
    let p = design.len();
    let sfx = &dialect.derived_table_suffix;
    let xs: Vec<String> = (1..=p).map(|j| format!("x_{j}")).collect();
    let x_list = xs.join(", ");

    let design_select = design
        .iter()
        .zip(&xs)
        .map(|(c, x)| format!("{} AS {x}", design_column_sql(c)))
        .collect::<Vec<_>>()
        .join(", ");
    let eta = beta
        .values()
        .iter()
        .zip(&xs)
        .map(|(b, x)| format!("{} * {x}", float_literal(*b)))
        .collect::<Vec<_>>()
        .join(" + ");

    let mut aggregates = Vec::new();
    let mut columns = Vec::new();
    for (j, x) in xs.iter().enumerate() {
        aggregates.push(format!("SUM({x} * r) AS u_{}", j + 1));
        columns.push(format!("u_{}", j + 1));
    }
    if with_info {
        for j in 0..p {
            for k in j..p {
                aggregates.push(format!("SUM(v * {} * {}) AS i_{}_{}", xs[j], xs[k], j + 1, k + 1));
                columns.push(format!("i_{}_{}", j + 1, k + 1));
            }
        }
    }
    aggregates.push("COUNT(*) AS n".into());
    columns.push("n".into());
    aggregates.push("SUM(dev) AS deviance".into());
    columns.push("deviance".into());

    let sql = format!(
        "SELECT {aggs}\nFROM (\n  SELECT {x_list}, {r_expr} AS r, {v_expr} AS v, {dev} AS dev\n  FROM (\n    SELECT {x_list}, y, {mu} AS mu\n    FROM (\n      SELECT {x_list}, y, ({eta}) AS eta\n      FROM (\n        SELECT {design_select}, {y} AS y\n        FROM {table}\n        WHERE {pop}{sfx}\n      ) AS design{sfx}\n    ) AS lp{sfx}\n  ) AS fitted{sfx}\n) AS contrib",
        aggs = aggregates.join(",\n       "),
        dev = deviance_sql(spec.family),
        mu = mean_sql(spec.link, "eta"),
        y = response_sql(&spec.response),
        table = quote_ident(&spec.table),
        pop = population_predicate(spec),
    );
    Ok(QueryPlan {
        sql,
        columns,
        labels,
        with_info,
    })
}

/// `SELECT COUNT(*)` over the modelling population.
pub fn count_query(spec: &ModelSpec) -> String {
    format!(
        "SELECT COUNT(*) FROM {} WHERE {}",
        quote_ident(&spec.table),
        population_predicate(spec)
    )
}

/// Distinct text values of `column` within the population, at most `limit` rows.
pub fn distinct_query(spec: &ModelSpec, column: &str, limit: usize) -> String {
    format!(
        "SELECT DISTINCT CAST({c} AS TEXT) FROM {t} WHERE {pop} LIMIT {limit}",
        c = quote_ident(column),
        t = quote_ident(&spec.table),
        pop = population_predicate(spec),
    )
}

fn raw_select_list(spec: &ModelSpec) -> String {
    spec.raw_columns()
        .iter()
        .map(|(c, kind)| match kind {
            RawKind::Numeric => quote_ident(c),
            RawKind::Text => format!("CAST({} AS TEXT)", quote_ident(c)),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Query materialising a random subsample of the raw model columns.
pub fn sample_query(
    spec: &ModelSpec,
    dialect: &Dialect,
    method: SampleMethod,
    n_target: u64,
    total: u64,
) -> String {
    let base = format!(
        "SELECT {} FROM {} WHERE {}",
        raw_select_list(spec),
        quote_ident(&spec.table),
        population_predicate(spec)
    );
    match (method, dialect.kind) {
        (SampleMethod::Bernoulli, _) => {
            if n_target >= total {
                base
            } else {
                let k = n_target as f64 / total as f64;
                format!("{base} AND {} < {}", dialect.random_expr, float_literal(k))
            }
        }
        (SampleMethod::Exact, DialectKind::SampleClause) => format!("{base} SAMPLE {n_target}"),
        (SampleMethod::Exact, DialectKind::GenericRandom) => {
            format!("{base} ORDER BY {} LIMIT {n_target}", dialect.random_expr)
        }
    }
}

/// Query materialising every population row.
pub fn fetch_all_query(spec: &ModelSpec) -> String {
    format!(
        "SELECT {} FROM {} WHERE {}",
        raw_select_list(spec),
        quote_ident(&spec.table),
        population_predicate(spec)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{Categorical, Term};

    #[test]
    fn quoting() {
        assert_eq!(quote_ident("a\"b"), "\"a\"\"b\"");
        assert_eq!(quote_literal("it's"), "'it''s'");
        assert_eq!(float_literal(-0.5), "(-0.5)");
        assert_eq!(float_literal(1.0), "1.0");
        assert_eq!(float_literal(1e-7), "1e-7");
    }

    #[test]
    fn literal_round_trips() {
        for &v in &[0.1, -1.0 / 3.0, 123456.789e-12, 2.5e300] {
            let s = float_literal(v);
            let parsed: f64 = s.trim_matches(|c| c == '(' || c == ')').parse().unwrap();
            assert_eq!(parsed, v);
        }
    }

    #[test]
    fn intercept_only_binomial_shape() {
        let spec = ModelSpec::new("t", Response::Column("y".into()), Family::Binomial, Link::Logit);
        let beta = ParamVector::zeros(spec.labels().unwrap());
        let plan = build_score_query(&spec, &beta, true, &Dialect::generic_random("RANDOM()")).unwrap();
        assert_eq!(plan.columns, vec!["u_1", "i_1_1", "n", "deviance"]);
        assert!(plan.sql.contains("SUM(x_1 * r) AS u_1"));
        assert!(plan.sql.contains("(y - mu) AS r"));
        assert!(plan.sql.contains("mu * (1.0 - mu) AS v"));
        assert!(plan.sql.contains("0.0 * x_1"));
    }

    #[test]
    fn categorical_column_count() {
        let spec = ModelSpec::new("t", Response::Column("y".into()), Family::Poisson, Link::Log).term(
            Term::Categorical(Categorical {
                column: "c".into(),
                levels: vec!["a".into(), "b".into(), "c".into()],
                reference: None,
            }),
        );
        let beta = ParamVector::zeros(spec.labels().unwrap());
        let plan = build_score_query(&spec, &beta, true, &Dialect::sqlite()).unwrap();
        assert_eq!(plan.p(), 3);
        assert_eq!(plan.columns.len(), 3 + 6 + 2);
        assert_eq!(plan.sql.matches("CASE WHEN CAST(\"c\" AS TEXT)").count(), 2);
        let light = build_score_query(&spec, &beta, false, &Dialect::sqlite()).unwrap();
        assert_eq!(light.columns.len(), 3 + 2);
    }

    #[test]
    fn unsupported_pair() {
        let spec = ModelSpec::new("t", Response::Column("y".into()), Family::Gamma, Link::Identity);
        let beta = ParamVector::zeros(spec.labels().unwrap());
        assert!(matches!(
            build_score_query(&spec, &beta, true, &Dialect::sqlite()),
            Err(Error::Unsupported { .. })
        ));
    }

    #[test]
    fn label_mismatch() {
        let spec = ModelSpec::new("t", Response::Column("y".into()), Family::Gaussian, Link::Identity)
            .numeric("x");
        let beta = ParamVector::zeros(vec!["(Intercept)".into(), "z".into()]);
        assert!(build_score_query(&spec, &beta, false, &Dialect::sqlite()).is_err());
    }

    #[test]
    fn sampling_syntax() {
        let spec = ModelSpec::new("t", Response::Column("y".into()), Family::Gaussian, Link::Identity)
            .numeric("x")
            .with_filter("x > 0");
        let q = sample_query(&spec, &Dialect::generic_random("RAND()"), SampleMethod::Bernoulli, 10, 40);
        assert_eq!(
            q,
            "SELECT \"y\", \"x\" FROM \"t\" WHERE \"y\" IS NOT NULL AND \"x\" IS NOT NULL AND (x > 0) AND RAND() < 0.25"
        );
        let all = sample_query(&spec, &Dialect::sqlite(), SampleMethod::Bernoulli, 40, 40);
        assert!(!all.contains("<"));
        let exact = sample_query(&spec, &Dialect::sample_clause(), SampleMethod::Exact, 10, 40);
        assert!(exact.ends_with("AND (x > 0) SAMPLE 10"));
    }
}
