use thiserror::Error;

/// Errors raised by the model, rate and profile solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("root not bracketed on [{lo}, {hi}]: {context}")]
    NoBracket { lo: f64, hi: f64, context: String },

    #[error("no conjugate state for rho = {rho} in (0, 1)")]
    NoConjugate { rho: f64 },

    /// The tail is not exponential (beta <= 1 on the requested side).
    #[error("no positive decay rate: {0}")]
    NoRoot(String),

    #[error("Newton/bisection failed at x = {x}: {reason}")]
    NonlinearSolve { x: f64, reason: String },

    #[error("step size too large: {0}")]
    StepSize(String),

    #[error("outer iteration did not converge after {iterations} iterations (last change {last_change:e})")]
    NotConverged { iterations: usize, last_change: f64 },

    #[error("tail limit mismatch at {edge}: expected {expected}, got {got}")]
    EndpointMismatch { edge: &'static str, expected: f64, got: f64 },

    #[error("profile left admissible range at x = {x}: P = {value}")]
    Positivity { x: f64, value: f64 },

    #[error("delay lookup at x = {x} outside the computed range [{lo}, {hi}]")]
    DelayOutOfRange { x: f64, lo: f64, hi: f64 },

    #[error("follower search failed near z = {0}")]
    Follower(f64),

    #[error("integration failure at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("CFL violation: dt = {dt} exceeds limit {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("non-finite value produced at t = {t}")]
    NonFinite { t: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
