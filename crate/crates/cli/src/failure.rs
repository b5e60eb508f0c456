//! Command failures and their process exit codes.

use std::fmt;

/// Exit codes: 2 configuration, 3 numeric failure, 4 missing input.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numeric(String),
    Missing(String),
    Other(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Missing(_) => 4,
            Failure::Other(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numeric(m) => write!(f, "numeric failure: {m}"),
            Failure::Missing(m) => write!(f, "missing input: {m}"),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<genrl::Error> for Failure {
    fn from(e: genrl::Error) -> Self {
        match e {
            genrl::Error::Config(m) => Failure::Config(m),
            e @ genrl::Error::NumericFailure { .. } => Failure::Numeric(e.to_string()),
            genrl::Error::Io(io) => io.into(),
            other => Failure::Other(other.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            Failure::Missing(e.to_string())
        } else {
            Failure::Other(e.into())
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Other(e.into())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Other(e.into())
    }
}
