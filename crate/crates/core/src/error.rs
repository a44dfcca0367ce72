use thiserror::Error;

/// Errors raised by model evaluation, estimation, simulation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("baseline hazard is singular at t = {t} (eta = {eta})")]
    Singularity { t: f64, eta: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("evaluation failed for subject {subject}: {reason}")]
    Evaluation { subject: String, reason: String },

    #[error("step {step} of the estimation pipeline failed: {source}")]
    Pipeline {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown scenario '{0}' (expected A, B or C)")]
    UnknownScenario(String),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn evaluation(subject: &str, reason: impl Into<String>) -> Self {
        Error::Evaluation {
            subject: subject.to_string(),
            reason: reason.into(),
        }
    }
}
