//! Out-of-core generalised linear models: fit a random subsample in memory,
//! then take one Fisher-scoring step using a single aggregation query over
//! the whole table.

pub mod error;
pub mod glm;
pub mod linalg;
pub mod onestep;
pub mod sampler;
pub mod simbench;
pub mod sql;

pub use error::{Error, ErrorClass, Result};
pub use glm::{Family, Link, ModelSpec, ParamVector, Response};
pub use onestep::{fit_onestep, report, FitOptions, FitReport, FitResult, InfoSource, ReportFormat};
pub use sampler::{SampleMethod, SampleSpec};
pub use sql::{DbConnection, Dialect};
