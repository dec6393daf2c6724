use thiserror::Error;

/// Errors raised by the kinetics engine.
///
/// Variants split into two families: input/validation problems and numerical
/// failures. [`Error::is_numerical`] tells them apart so front ends can map
/// them to distinct exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("state space too large: N = {n} exceeds the dense limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("rate overflow on pair ({from}, {to}): activation energy {activation} is too negative")]
    RateOverflow {
        from: String,
        to: String,
        activation: f64,
    },

    #[error("simplex drift {drift:e} exceeds tolerance {tol:e}")]
    SimplexDrift { drift: f64, tol: f64 },

    #[error("negative weight {value:e} at index {index} beyond roundoff tolerance")]
    NegativeMass { index: usize, value: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("singular {0}")]
    Singular(String),

    #[error("stationary density is not unique ({classes} closed classes)")]
    NotUnique { classes: usize },

    #[error("value {value} outside the attainable range ({lo}, {hi})")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical engines rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RateOverflow { .. }
                | Error::SimplexDrift { .. }
                | Error::NegativeMass { .. }
                | Error::StepUnderflow { .. }
                | Error::Singular(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}
