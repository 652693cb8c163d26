//! Crate-wide error type.
//!
//! Errors separate into four classes that callers (notably the CLI) treat
//! differently: malformed inputs ([`Error::Invalid`], [`Error::Parse`],
//! [`Error::Io`], [`Error::Json`], [`Error::OutOfHorizon`]), scenarios in
//! which the balance sheet fails ([`Error::Insolvent`]), and numerical
//! breakdown ([`Error::NonFinite`]).

use std::path::Path;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input object violated one of its invariants.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A tenor or year argument fell outside the available horizon.
    #[error("year {argument} outside horizon 1..={horizon}")]
    OutOfHorizon { argument: u32, horizon: u32 },

    /// Text-file parsing failed; `line` is 1-based.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// A file could not be read or written.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A structured input file failed to deserialize.
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    /// A projection scenario exhausted its assets before its liabilities;
    /// the run-off framework assumes solvency, so the run is aborted.
    #[error(
        "scenario {scenario} insolvent in year {year}: \
         asset market value {market_value:.6}"
    )]
    Insolvent {
        scenario: usize,
        year: u32,
        market_value: f64,
    },

    /// A computation produced NaN or an infinity.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
}

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }

    pub(crate) fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn json(path: &Path, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.display().to_string(),
            source,
        }
    }
}
