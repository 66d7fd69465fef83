use thiserror::Error;

/// Errors produced by the simulation core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("state is off the required manifold: {0}")]
    Manifold(String),

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("singular input: {0}")]
    Singular(String),

    #[error("unphysical covariance: {0}")]
    Unphysical(String),

    #[error("non-uniform sampling")]
    NonUniform,

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("positivity violated: min eigenvalue {0:e}")]
    Positivity(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParams {
            field,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepUnderflow { .. }
                | Error::TooManySteps { .. }
                | Error::NonFinite { .. }
                | Error::Singular(_)
                | Error::Unphysical(_)
                | Error::Positivity(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
