use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DialectKind {
    /// Bernoulli sampling with a `random() < k` predicate.
    GenericRandom,
    /// Exact-n sampling with a trailing `SAMPLE n` clause.
    SampleClause,
}

/// Engine-specific SQL fragments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialect {
    pub kind: DialectKind,
    /// Expression yielding a uniform draw on `[0, 1)`, evaluated once per row.
    pub random_expr: String,
    /// Appended inside each derived table of the score query. SQLite flattens
    /// nested subqueries into the aggregate and then re-evaluates `exp` once
    /// per aggregate column; `LIMIT -1` keeps each layer evaluated once per row.
    pub derived_table_suffix: String,
}

impl Dialect {
    /// SQLite with the connection-registered seeded uniform function.
    pub fn sqlite() -> Self {
        Self {
            kind: DialectKind::GenericRandom,
            random_expr: format!("{}()", super::connection::UNIFORM_FUNCTION),
            derived_table_suffix: " LIMIT -1".to_string(),
        }
    }

    /// Any engine with a uniform random function, e.g. `RAND()`.
    pub fn generic_random(random_expr: impl Into<String>) -> Self {
        Self {
            kind: DialectKind::GenericRandom,
            random_expr: random_expr.into(),
            derived_table_suffix: String::new(),
        }
    }

    /// Engines with a `SELECT ... SAMPLE n` qualifier (MonetDB).
    pub fn sample_clause() -> Self {
        Self {
            kind: DialectKind::SampleClause,
            random_expr: "RAND()".to_string(),
            derived_table_suffix: String::new(),
        }
    }
}

impl Default for Dialect {
    fn default() -> Self {
        Self::sqlite()
    }
}
