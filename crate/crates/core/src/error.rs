use thiserror::Error;

use crate::dynamics::TrajectoryDiagnostics;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid of {points} points cannot represent {modes} modes (need at least {required})")]
    GridTooSmall {
        points: usize,
        modes: usize,
        required: usize,
    },

    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),

    #[error("time must be strictly positive, got {0}")]
    NonPositiveTime(f64),

    /// Argument of the logarithmic potential outside (-1, 1) with clipping disabled.
    #[error("logarithmic potential evaluated at singular point x = {0}")]
    SingularInput(f64),

    #[error("numerical blowup at step {step}")]
    NumericalBlowup {
        step: u64,
        diagnostics: Box<TrajectoryDiagnostics>,
    },

    #[error("all importance weights vanish")]
    DegenerateEnsemble,

    #[error("control endpoint sup-norm {sup} exceeds {limit}")]
    ControlOutOfRange { sup: f64, limit: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
