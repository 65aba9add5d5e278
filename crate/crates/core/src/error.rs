use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A CSV cell or header does not conform to the expected schema.
    /// `row` is the 1-based data row (0 for the header).
    #[error("schema error at row {row}, column {column}: {message}")]
    Schema {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),

    #[error("estimate covariance unavailable: {0}")]
    CovarianceUnavailable(String),

    #[error("singular matrix for study {study}")]
    SingularStudy { study: String },

    #[error("instance too large for brute force: {0}")]
    TooLarge(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Schema { .. } => "schema",
            Error::InvalidInput(_) => "invalid_input",
            Error::Domain(_) => "domain",
            Error::Precondition(_) => "precondition",
            Error::NonConvergence(_) => "non_convergence",
            Error::CovarianceUnavailable(_) => "covariance_unavailable",
            Error::SingularStudy { .. } => "singular_study",
            Error::TooLarge(_) => "too_large",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
