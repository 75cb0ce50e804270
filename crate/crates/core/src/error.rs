use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("resolution mismatch: {0} vs {1}")]
    ResolutionMismatch(usize, usize),

    #[error("field has a nonzero mean mode")]
    NonzeroMean,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("blow-up at t = {time}: |U|_1 = {norm:e} exceeds ceiling {ceiling:e}")]
    BlowUp { time: f64, norm: f64, ceiling: f64 },

    #[error("insufficient {what}: got {got}, need at least {need}")]
    Insufficient {
        what: &'static str,
        got: usize,
        need: usize,
    },

    #[error("trajectory granularity insufficient: {0}")]
    Granularity(String),

    #[error("window [{start}, {end}] lies outside the recorded trajectory")]
    Window { start: f64, end: f64 },

    #[error("config error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("config validation: {0}")]
    ConfigInvalid(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
