//! Error type shared across the crate.
//!
//! Errors carry a category that maps onto the CLI exit codes: configuration
//! problems (2), refused assumption checks (3), and numerical failures (4).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed configuration, unresolvable references, bad file contents.
    #[error("config error: {0}")]
    Config(String),

    /// Input outside the domain of an operation (e.g. a state outside the
    /// model bounds).
    #[error("domain error: {0}")]
    Domain(String),

    /// A theorem hypothesis or certified assumption does not hold, so the
    /// operation refuses to produce a result.
    #[error("assumption violated: {0}")]
    Assumption(String),

    /// Iteration budgets exceeded, singular systems, ambiguous limits.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 assumption refusal,
    /// 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::Io(_) | Error::Json(_) => 2,
            Error::Assumption(_) => 3,
            Error::Numerical(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Assumption(_) => "assumption",
            Error::Numerical(_) => "numerical",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
