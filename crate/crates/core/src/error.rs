use alloc::string::String;

/// Errors raised by the simulation, limit and diagnostics routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A hidden state (or Jacobian) left the explosion guard. `layer` is the
    /// grid index at which the norm was first observed above the threshold.
    #[error("explosion on path {path} at step {layer}: norm {norm:e}")]
    Explosion { path: u64, layer: usize, norm: f64 },

    #[error("singular matrix at t = {t}: condition number {cond:e}")]
    Singular { t: f64, cond: f64 },

    #[error("covariance is not positive semidefinite at t = {t}")]
    NonPsdCovariance { t: f64 },

    #[error("training diverged at update {update}: loss {loss:e}")]
    Divergence { update: usize, loss: f64 },

    #[error("{exploded} of {total} Monte Carlo paths exploded (limit is 1%)")]
    TooManyExplosions { exploded: usize, total: usize },

    #[error("weight tensor carries no per-layer delta")]
    MissingDelta,

    #[error("insufficient data: {0}")]
    Insufficient(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    /// Numerical failures (blow-up, divergence, singularity) as opposed to
    /// invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Explosion { .. }
                | Error::Singular { .. }
                | Error::Divergence { .. }
                | Error::TooManyExplosions { .. }
                | Error::NonPsdCovariance { .. }
        )
    }

    /// Tag an explosion with the Monte Carlo path it came from.
    pub fn on_path(self, path: u64) -> Self {
        match self {
            Error::Explosion { layer, norm, .. } => Error::Explosion { path, layer, norm },
            other => other,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
