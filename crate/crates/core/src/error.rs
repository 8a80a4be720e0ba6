use thiserror::Error;

use crate::sampling::Space;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("root finding did not converge: {0}")]
    Convergence(String),

    /// `minor` is the 1-based order of the leading minor where factorization broke down.
    #[error("matrix is not positive definite (leading minor {minor}): {detail}")]
    NotPositiveDefinite { minor: usize, detail: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("sample matrix lives in {found:?} space, expected {expected:?}")]
    SpaceMismatch { expected: Space, found: Space },

    #[error("zero variance in {0}")]
    ZeroVariance(String),

    #[error("design matrix is rank deficient (condition estimate {condition:.3e})")]
    RankDeficient { condition: f64 },

    /// `row` is `None` when the failure is not attributable to a single sample.
    #[error("model evaluation failed{}: {message}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    ModelEvaluation { row: Option<usize>, message: String },
}
