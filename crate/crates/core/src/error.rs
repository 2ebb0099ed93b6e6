use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("unstable closed loop: rho[F+GK] = {rho}")]
    UnstableClosedLoop { rho: f64 },

    #[error("unstable estimator: rho[F-LC] = {rho}")]
    UnstableEstimator { rho: f64 },

    #[error("stability precondition violated: {0}")]
    StabilityPrecondition(String),

    #[error("non-detectable or ill-conditioned model: {0}")]
    NonConvergence(String),

    #[error("no prediction available: scenario is not attacked")]
    NoPrediction,

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn dim(what: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            what,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// True for failures caused by the model's dynamics rather than by its input.
    pub fn is_instability(&self) -> bool {
        matches!(
            self,
            Error::UnstableClosedLoop { .. }
                | Error::UnstableEstimator { .. }
                | Error::StabilityPrecondition(_)
                | Error::NonConvergence(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
