use thiserror::Error;

use crate::fieldspec::FieldError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("points coincide (|x - y| = {distance:e})")]
    CoincidentPoints { distance: f64 },

    #[error("point outside the admissible domain: {0}")]
    OutOfDomain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("integrand is not finite at {at:?}")]
    NonFinite { at: Vec<f64> },

    #[error("integrand decays too slowly: fitted exponent {exponent:.4} does not exceed {required}")]
    SlowDecay { exponent: f64, required: f64 },

    #[error("boundary integral diverges (panel ratio {ratio:.6})")]
    Divergent { ratio: f64 },

    #[error("singular integral does not converge (panel ratio {ratio:.6})")]
    NonIntegrable { ratio: f64 },

    #[error("point too close to the boundary: distance {distance:.3e} < required {required:.3e}")]
    TooCloseToBoundary { distance: f64, required: f64 },

    #[error("field smoothness {found} is insufficient, need at least {required}")]
    InsufficientSmoothness { found: String, required: String },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error(transparent)]
    Field(#[from] FieldError),

    #[error(
        "Picard iteration is not contracting at tau = {tau:.4} (measured ratio {ratio:.4}); \
         try tau_steps >= {suggested_tau_steps}"
    )]
    NonContractive {
        tau: f64,
        ratio: f64,
        suggested_tau_steps: usize,
    },

    #[error("Picard iteration did not reach tolerance within {iterations} iterations at tau = {tau:.4}")]
    MaxItersExceeded { iterations: usize, tau: f64 },

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("interpolation system is singular")]
    SingularSystem,
}
