use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("resource budget exceeded: {what} would need {needed}, budget is {budget}")]
    Budget {
        what: &'static str,
        needed: u64,
        budget: u64,
    },

    #[error("count is truncated: 1/x = {inv_x:e} is below the enumeration threshold {threshold:e}")]
    Truncated { inv_x: f64, threshold: f64 },

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("shape mismatch: expected {expected} coordinates, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("degenerate normalization: variance {0:e} is below 1e-12")]
    DegenerateNormalization(f64),

    #[error("numeric failure: {reason} (best estimate {estimate})")]
    Numeric { reason: String, estimate: f64 },

    #[error("moment table does not cover t = {0:e}")]
    Coverage(f64),

    #[error("asymptotic hypothesis violated: {0}")]
    HypothesisViolated(#[from] HypothesisViolated),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Returned instead of a number when a model does not satisfy the regularity
/// hypothesis behind the asymptotic formulas (e.g. the geometric law).
#[derive(Debug, Clone, PartialEq, Eq, Error, serde::Serialize)]
#[error("{reason}")]
pub struct HypothesisViolated {
    pub reason: String,
}
