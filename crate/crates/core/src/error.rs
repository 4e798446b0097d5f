use thiserror::Error;

/// Errors raised by the estimators, optimizers and numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} = {value} is out of range: {expected}")]
    OutOfRange {
        name: &'static str,
        value: String,
        expected: String,
    },

    #[error("unit cost {index} must be positive (got {value})")]
    NonPositiveUnitCost { index: usize, value: f64 },

    #[error("infeasible allocation: {0}")]
    InfeasibleAllocation(String),

    #[error("infeasible budget {budget}: {reason}")]
    InfeasibleBudget { budget: f64, reason: String },

    #[error("mean-value parameter outside the family domain: {0}")]
    Domain(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("iteration diverged at step {step} (residual {residual:e})")]
    Divergence { step: usize, residual: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("empty input")]
    EmptyInput,

    #[error("matrix maps the iterate to the zero vector")]
    ZeroVector,

    #[error("no eigenpairs retained above the truncation threshold")]
    NoEigenpairs,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed result file: {0}")]
    Format(String),

    #[error("replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn out_of_range(name: &'static str, value: impl ToString, expected: impl Into<String>) -> Self {
        Error::OutOfRange {
            name,
            value: value.to_string(),
            expected: expected.into(),
        }
    }
}

impl Error {
    /// Problems with the request itself rather than with running it.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::OutOfRange { .. }
                | Error::NonPositiveUnitCost { .. }
                | Error::InfeasibleAllocation(_)
                | Error::InfeasibleBudget { .. }
                | Error::DimensionMismatch { .. }
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
