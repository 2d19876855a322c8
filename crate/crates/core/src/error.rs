use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("theta = {theta} is outside the domain {domain} of model `{model}`")]
    Domain {
        model: String,
        theta: f64,
        domain: String,
    },

    #[error("insufficient data: {count} samples, need at least {required}")]
    InsufficientData { count: u64, required: u64 },

    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("quadrature did not converge (last estimate {last}, previous {previous})")]
    QuadratureFailure { last: f64, previous: f64 },

    #[error("degenerate information {0}: variance bound is unbounded")]
    DegenerateInformation(f64),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot plot an empty curve")]
    EmptyCurve,

    #[error("run failed: {flagged} of {total} grid points flagged")]
    RunFailed { flagged: usize, total: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
