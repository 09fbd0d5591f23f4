//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the solver suite.
///
/// The CLI maps these onto process exit codes: parameter/region problems
/// exit 1, numerical divergence exits 2, I/O problems exit 3.
#[derive(Error, Debug)]
pub enum Error {
    /// A caller-supplied value violates a precondition (mesh size, order,
    /// parameters outside the admissible region, mismatched dimensions...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A quantity that must converge failed to do so (divergent endpoint
    /// extrapolation, divergent improper integral, non-contracting
    /// iteration).
    #[error("numerical divergence: {0}")]
    Divergence(String),

    /// The requested construction is not available for the classified
    /// parameter regime (e.g. operator spaces at a Case 4 point).
    #[error("case mismatch: {0}")]
    CaseMismatch(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
