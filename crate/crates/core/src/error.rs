use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the engine can report.
///
/// Variants split into two families that the command-line front end maps to
/// different exit codes: input/validation problems (the caller can fix the
/// input) and numerical problems (the data or model could not be fitted).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid protocol: {}", .0.join("; "))]
    InvalidProtocol(Vec<String>),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("enumeration of {count} sequences exceeds the bound of {bound}; draw sequences at random instead")]
    EnumerationTooLarge { count: String, bound: u64 },

    #[error("treatment effect unidentifiable: {0}")]
    Unidentifiable(String),

    #[error("singular design matrix: {0}")]
    Singular(String),

    #[error("GLS/rho iteration did not converge after {iterations} iterations (rho trace tail: {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numbers rather than by the input's shape.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Unidentifiable(_)
                | Error::Singular(_)
                | Error::NonConvergence { .. }
                | Error::Sampler(_)
        )
    }

    /// Short machine-readable tag used in error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidProtocol(_) => "invalid_protocol",
            Error::Invalid(_) => "invalid_input",
            Error::Parse { .. } => "parse",
            Error::EnumerationTooLarge { .. } => "enumeration_bound",
            Error::Unidentifiable(_) => "unidentifiable",
            Error::Singular(_) => "singular",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Sampler(_) => "sampler",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
