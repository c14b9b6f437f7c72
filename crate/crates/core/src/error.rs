use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("time {t} outside schedule interval [{start}, {end}]")]
    Domain { t: f64, start: f64, end: f64 },

    #[error("singularity at t = {t}: {reason}")]
    Singular { t: f64, reason: String },

    #[error("integration budget exhausted at t = {t} after {steps} steps")]
    Budget { t: f64, steps: usize },

    #[error("degenerate frame: {0}")]
    Degenerate(String),

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("packet truncation: {0}")]
    Truncation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain { .. } => 2,
            Error::Singular { .. } | Error::Budget { .. } => 3,
            Error::Degenerate(_) | Error::Consistency(_) | Error::Truncation(_) => 4,
            Error::Io { .. } => 5,
        }
    }

    /// Short machine-readable tag, written into summaries.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Domain { .. } => "domain",
            Error::Singular { .. } => "singularity",
            Error::Budget { .. } => "budget",
            Error::Degenerate(_) => "degenerate",
            Error::Consistency(_) => "consistency",
            Error::Truncation(_) => "truncation",
            Error::Io { .. } => "io",
        }
    }

    /// Stamps a singularity raised by a pure function with the time it occurred.
    pub fn at_time(self, time: f64) -> Self {
        match self {
            Error::Singular { reason, .. } => Error::Singular { t: time, reason },
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
