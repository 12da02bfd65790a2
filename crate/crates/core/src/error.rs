use thiserror::Error;

/// Errors raised by the geometry kernels, model constructors and solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value at grid point {index}")]
    NonFinite { index: usize },

    #[error("component matrix is not Hermitian at grid point {index} (relative deviation {deviation:e})")]
    NotHermitian { index: usize, deviation: f64 },

    #[error("form is not positive definite at grid point {index} (pivot {pivot:e})")]
    NotPositive { index: usize, pivot: f64 },

    #[error("non-positive density {value:e} at grid point {index}")]
    NonPositiveDensity { index: usize, value: f64 },

    #[error("modulus leaves the upper half plane: Im tau = {im_tau:e}")]
    ModulusOutOfRange { im_tau: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("stiffness breakdown at t = {t}: step size {dt:e} underflowed")]
    StiffnessBreakdown { t: f64, dt: f64 },

    #[error("Kähler condition violated at t = {t} (margin {margin:e})")]
    KahlerViolation { t: f64, margin: f64 },

    #[error("Newton iteration did not converge after {iterations} steps (residuals {history:?})")]
    NonConvergence { iterations: usize, history: Vec<f64> },

    #[error("positivity could not be restored by step damping at Newton step {iteration}")]
    PositivityUnrecoverable { iteration: usize },

    #[error("Krylov solver stalled: {0}")]
    KrylovBreakdown(String),

    #[error("rate fit needs at least {needed} samples in the window, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("sample {index} has non-positive value {value:e}; cannot take its logarithm")]
    NonPositiveSample { index: usize, value: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
