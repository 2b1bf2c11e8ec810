use thiserror::Error;

/// Errors raised by the numerical operations of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument in {op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("time {t} outside span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },

    #[error("collision imminent: peakons {i} and {j} are {gap:e} apart at t = {t}")]
    CollisionImminent { i: usize, j: usize, gap: f64, t: f64 },

    #[error("left/right slopes differ at x = {x}: {left} vs {right}")]
    SlopeMismatch { x: f64, left: f64, right: f64 },

    #[error("tangent argument {arg} left the principal branch")]
    ArgumentOutOfRange { arg: f64 },

    #[error("window inverted at t = {t}: alpha = {alpha} > beta = {beta}")]
    WindowInverted { t: f64, alpha: f64, beta: f64 },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("successive differences do not decay (ratio {ratio})")]
    NonCauchy { ratio: f64 },

    #[error("|v| = {v} fell below the floor {floor} at t = {t}")]
    VFloorViolated { t: f64, v: f64, floor: f64 },

    #[error("step {dt} exceeds the admissible regime {limit}")]
    RegimeViolated { dt: f64, limit: f64 },

    #[error("integrator failure at t = {t}: {reason}")]
    Integrator { t: f64, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(op: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        op,
        reason: reason.into(),
    }
}
