use std::fmt;

use sqlglm::ErrorClass;

/// A command failure: exit code class plus a machine-readable reason.
#[derive(Debug)]
pub struct Failure {
    pub class: ErrorClass,
    pub reason: String,
    pub message: String,
}

impl Failure {
    pub fn config(reason: &str, message: impl Into<String>) -> Self {
        Self {
            class: ErrorClass::Config,
            reason: reason.into(),
            message: message.into(),
        }
    }

    pub fn database(reason: &str, message: impl Into<String>) -> Self {
        Self {
            class: ErrorClass::Database,
            reason: reason.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        exit_code(self.class)
    }

    /// `error class=<class> reason=<tag> detail=<json string>`, always one line.
    pub fn line(&self) -> String {
        format!(
            "error class={} reason={} detail={}",
            class_name(self.class),
            self.reason,
            serde_json::to_string(&self.message).expect("string serialises")
        )
    }
}

pub fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 1,
        ErrorClass::Database => 2,
        ErrorClass::Statistical => 3,
    }
}

pub fn class_name(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::Config => "config",
        ErrorClass::Database => "database",
        ErrorClass::Statistical => "statistical",
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl From<sqlglm::Error> for Failure {
    fn from(e: sqlglm::Error) -> Self {
        Self {
            class: e.class(),
            reason: e.reason().into(),
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::database("csv", e.to_string())
    }
}

impl From<rusqlite::Error> for Failure {
    fn from(e: rusqlite::Error) -> Self {
        sqlglm::Error::from(e).into()
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        sqlglm::Error::from(e).into()
    }
}
