use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid saddle problem: {0}")]
    InvalidProblem(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The mean lies in the span of the negative-curvature directions, so the
    /// normalized state is undefined.
    #[error("||m||_+ = 0: normalized state undefined")]
    NormPlusZero,

    #[error("step size {sigma} fell below sigma_min at t = {t}")]
    StepSizeUnderflow { sigma: f64, t: u64 },

    #[error("grid too coarse: {points} points, need at least {min}")]
    GridTooCoarse { points: usize, min: usize },

    #[error("invalid grid spec `{0}`")]
    InvalidGrid(String),

    #[error("success probability below 2/5 already at the smallest grid step size {sigma_tilde}")]
    Sigma40BelowGrid { sigma_tilde: f64 },

    #[error("step-size drift never reaches B2 on the grid (smallest sigma_tilde {sigma_tilde}, w = {w})")]
    SigmaStarBelowGrid { w: f64, sigma_tilde: f64 },

    /// The mean-drift lower bound is not positive at the requested confidence.
    #[error("drift bound C = {c} is not positive (worst point w = {w}, sigma_tilde = {sigma_tilde}); increase the sample size")]
    NonPositiveDriftBound { c: f64, w: f64, sigma_tilde: f64 },

    #[error("trace never reached the negative region")]
    NoEscape,

    #[error(transparent)]
    Json(#[from] JsonError),
}

/// `serde_json::Error` is neither `Clone` nor `PartialEq`; keep the message.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct JsonError(pub String);

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(JsonError(e.to_string()))
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
