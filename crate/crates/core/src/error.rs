use thiserror::Error;

/// Errors raised by the filtering and estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("numerical failure in {what} (condition estimate {condition:.3e})")]
    NumericalFailure { what: String, condition: f64 },

    /// The one-lag regression has fewer independent equations than unknowns.
    #[error("underdetermined regression: rank {rank} < {needed} unknowns")]
    Underdetermined { rank: usize, needed: usize },

    #[error("config error at line {line}, field `{field}`: {message}")]
    Config {
        line: usize,
        field: String,
        message: String,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(what: impl Into<String>, condition: f64) -> Self {
        Error::NumericalFailure {
            what: what.into(),
            condition,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
