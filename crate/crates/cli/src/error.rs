//! CLI error type with the exit-code mapping and machine-readable rendering.

use serde::Serialize;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config file, bad input data, or missing files. Exit code 2.
    #[error("{0}")]
    Config(String),

    /// Numeric failure (divergence) or a verified tolerance violation.
    /// Exit code 3.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numeric(_) => "numeric",
        }
    }

    /// One-line JSON for scripts consuming stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct ErrorBody<'a> {
            kind: &'a str,
            message: String,
        }
        #[derive(Serialize)]
        struct ErrorJson<'a> {
            error: ErrorBody<'a>,
        }
        serde_json::to_string(&ErrorJson {
            error: ErrorBody {
                kind: self.kind(),
                message: self.to_string(),
            },
        })
        .expect("error serialization cannot fail")
    }
}

impl From<tme::Error> for CliError {
    fn from(err: tme::Error) -> Self {
        match err {
            tme::Error::Numeric(msg) => CliError::Numeric(msg),
            tme::Error::Internal(msg) => CliError::Numeric(msg),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Config(format!("I/O error: {err}"))
    }
}
