use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension {n} exceeds the table limit {max} for `{op}`")]
    DimensionTooLarge { op: &'static str, n: usize, max: usize },

    #[error("coordinate index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("delta coefficient undefined at t = 0 for eps != x(t)")]
    DeltaUndefined,

    #[error("quadrature did not reach tolerance {tolerance:e} within {intervals} intervals (error estimate {estimate:e})")]
    QuadratureNonConvergence {
        tolerance: f64,
        intervals: usize,
        estimate: f64,
        value: f64,
    },

    #[error("truncated support leaves mass {mass:e} outside the cutoff (limit {limit:e})")]
    CutoffMassTooLarge { mass: f64, limit: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("{alpha} is not in (0, 1)")))
    }
}

pub(crate) fn check_moment(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(invalid("p", format!("{p} is not >= 1")))
    }
}

pub(crate) fn check_positive_time(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(invalid("t", format!("{t} is not > 0")))
    }
}
