use thiserror::Error;

/// Errors raised by the decomposition and tracking routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A value lies outside the domain of a function (non-finite input, μ ≤ 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Operand shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A configuration or call parameter is out of range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The line search was handed a direction with non-negative slope.
    #[error("search direction is not a descent direction (slope = {slope:e})")]
    NonDescent { slope: f64 },

    /// Backtracking shrank the step below the underflow threshold without
    /// satisfying the sufficient decrease condition.
    #[error("line search stalled at step {step:e}")]
    Stalled { step: f64 },

    /// A file could not be decoded. `offset` is the byte offset of the
    /// offending record; `line` is set for text formats.
    #[error("parse error at byte {offset}{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Parse { offset: u64, line: Option<usize>, message: String },

    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}

pub(crate) fn param_err(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
