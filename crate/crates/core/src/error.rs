//! Error type shared across the crate.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("curves live on different grids ({left} vs {right} points)")]
    GridMismatch { left: usize, right: usize },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("subject {subject_id} has {found} observations but the basis needs {required}")]
    SubjectTooSparse {
        subject_id: String,
        found: usize,
        required: usize,
    },

    #[error("penalized normal equations are singular (lambda={lambda})")]
    IllConditionedBasis { lambda: f64 },

    #[error("invalid spline configuration: {0}")]
    InvalidSplineConfig(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("design matrix is rank deficient; dependent columns: {columns:?}")]
    RankDeficient { columns: Vec<String> },

    #[error("need more samples: {0}")]
    InsufficientSamples(String),

    #[error("leading block of the partitioned matrix is singular")]
    SingularBlock,

    #[error("requested {requested} components but only {available} positive eigenvalues exist")]
    TooManyComponents { requested: usize, available: usize },

    #[error("weights must be nonnegative (found {0})")]
    InvalidWeights(f64),

    #[error("unsupported Matérn smoothness nu={0}; only 5/2 is implemented")]
    UnsupportedSmoothness(f64),

    #[error("covariance factorization failed even after jitter")]
    NumericallySingularCovariance,

    #[error("treatment factor has a single level; interaction test is undefined")]
    DegenerateFactor,

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by malformed or inconsistent input data, as
    /// opposed to numerical failures. Drives the CLI exit-code split.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Io { .. }
                | Error::GridMismatch { .. }
                | Error::InvalidGrid(_)
                | Error::InvalidCurve(_)
                | Error::InvalidSplineConfig(_)
                | Error::InvalidDesign(_)
                | Error::DomainError(_)
                | Error::DegenerateFactor
                | Error::InvalidWeights(_)
                | Error::UnsupportedSmoothness(_)
        )
    }
}
