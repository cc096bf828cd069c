use alloc::string::String;

/// Errors reported by the prediction pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Operand shapes do not conform.
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        /// Operation that detected the mismatch.
        op: &'static str,
        /// Expected shape, rendered as text.
        expected: String,
        /// Actual shape, rendered as text.
        found: String,
    },
    /// An iterative decomposition failed to converge.
    #[error("{0} did not converge")]
    NotConverged(&'static str),
    /// A linear system is singular or too badly conditioned to solve.
    #[error("ill-conditioned system in {op} (condition estimate {cond:e})")]
    IllConditioned {
        /// Operation that detected the problem.
        op: &'static str,
        /// Condition number estimate (infinite when singular).
        cond: f64,
    },
    /// A matrix that must be Hermitian is not.
    #[error("matrix is not Hermitian in {0}")]
    NotHermitian(&'static str),
    /// An AR recursion is not Schur-stable.
    #[error("unstable AR dynamics: spectral radius {0}")]
    Unstable(f64),
    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// A reference channel has zero energy.
    #[error("zero reference channel")]
    ZeroChannel,
    /// An empty input where at least one element is required.
    #[error("empty input: {0}")]
    Empty(&'static str),
    /// A cached forward tape does not belong to the network being differentiated.
    #[error("forward tape does not match network")]
    TapeMismatch,
}

/// Crate-wide result type.
pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn dim_err(op: &'static str, expected: impl core::fmt::Display, found: impl core::fmt::Display) -> Error {
    use alloc::string::ToString;
    Error::DimensionMismatch {
        op,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
