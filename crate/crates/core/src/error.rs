use thiserror::Error;

use crate::glm::{Family, Link};

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error taxonomy, used by the command-line front end for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The model or options are malformed.
    Config,
    /// The database rejected a statement or the schema is wrong.
    Database,
    /// The data do not support the requested fit.
    Statistical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("{family}-{link} is not supported: only links expressible with arithmetic and EXP in SQL are available (binomial-logit, poisson-log, gaussian-identity, gamma-log)")]
    Unsupported { family: Family, link: Link },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid response value {value} at row {row} for the {family} family")]
    InvalidResponse { row: usize, value: f64, family: Family },

    #[error("mean {mu} is outside the valid range of the {family} family (link {link})")]
    Domain { family: Family, link: Link, mu: f64 },

    #[error("matrix is not positive definite: pivot {pivot} is {value}")]
    RankDeficient { pivot: usize, value: f64 },

    #[error("Fisher scoring did not converge after {iterations} iterations (last step {last_step:e})")]
    NonConvergence { iterations: usize, last_step: f64 },

    #[error("complete separation suspected: max |linear predictor| = {max_eta:.2} exceeds {bound}")]
    Separation { max_eta: f64, bound: f64 },

    #[error("realised subsample has {realised} rows, fewer than the required {required}; increase the sampling exponent")]
    SampleTooSmall { realised: usize, required: usize },

    #[error("population has {rows} rows but the model has {params} parameters")]
    TooFewRows { rows: u64, params: usize },

    #[error("column {column:?} has {count} distinct values, more than the limit of {limit}; it is probably not categorical")]
    TooManyLevels { column: String, count: usize, limit: usize },

    #[error("column {column:?} has {count} distinct value(s); a categorical term needs at least two")]
    TooFewLevels { column: String, count: usize },

    #[error("aggregate {column} is not finite")]
    NonFiniteAggregate { column: String },

    #[error("{0}")]
    Dialect(String),

    #[error("database error: {0}")]
    Database(#[from] rusqlite::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidSpec(_)
            | Error::Unsupported { .. }
            | Error::DimensionMismatch { .. }
            | Error::TooManyLevels { .. }
            | Error::TooFewLevels { .. } => ErrorClass::Config,
            Error::Database(_) | Error::Io(_) | Error::Dialect(_) | Error::NonFiniteAggregate { .. } => {
                ErrorClass::Database
            }
            Error::InvalidResponse { .. }
            | Error::Domain { .. }
            | Error::RankDeficient { .. }
            | Error::NonConvergence { .. }
            | Error::Separation { .. }
            | Error::SampleTooSmall { .. }
            | Error::TooFewRows { .. } => ErrorClass::Statistical,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "invalid_spec",
            Error::Unsupported { .. } => "unsupported_family_link",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidResponse { .. } => "invalid_response",
            Error::Domain { .. } => "domain",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Separation { .. } => "separation",
            Error::SampleTooSmall { .. } => "sample_too_small",
            Error::TooFewRows { .. } => "too_few_rows",
            Error::TooManyLevels { .. } => "too_many_levels",
            Error::TooFewLevels { .. } => "too_few_levels",
            Error::NonFiniteAggregate { .. } => "non_finite_aggregate",
            Error::Dialect(_) => "dialect",
            Error::Database(_) => "database",
            Error::Io(_) => "io",
        }
    }
}
