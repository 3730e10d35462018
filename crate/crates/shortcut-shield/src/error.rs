//! Error taxonomy for the crate.
//!
//! Errors are grouped by how a caller should react to them, and each group
//! maps to a process exit code used by the CLI:
//!
//! | exit code | meaning                                         |
//! |-----------|-------------------------------------------------|
//! | 0         | success                                         |
//! | 2         | configuration error (fix the inputs and rerun)  |
//! | 3         | runtime error (data, numerics, I/O)             |
//! | 4         | a strict theory check failed                    |

use thiserror::Error;

/// Convenient result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All errors produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-supplied configuration (bad parameter ranges, infeasible
    /// joints, malformed method names, stratification-infeasible batch sizes).
    #[error("configuration error: {0}")]
    Config(String),

    /// A `(y, v)` cell required by the overlap assumption is empty.
    #[error("empty (y={y}, v={v}) cell in {context}")]
    EmptyCell { y: u8, v: u8, context: &'static str },

    /// One of the two `v` groups required by the marginal MMD is empty.
    #[error("v={v} group is empty; MMD between group embeddings is undefined")]
    EmptyGroup { v: u8 },

    /// Matrix/vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A documented numeric contract was violated by the caller
    /// (e.g. group-normalized weights that do not sum to one).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Numerical failure beyond documented tolerances
    /// (e.g. an MMD estimate more negative than rounding can explain).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A minibatch does not satisfy the objective's group-count
    /// preconditions; the caller must restratify.
    #[error("batch composition error: {0}")]
    BatchComposition(String),

    /// A strict theory assertion (exact identity or arithmetic ordering)
    /// failed. This is the only variant mapped to exit code 4.
    #[error("strict check failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI contract (0 success, 2 config,
    /// 3 runtime, 4 strict-check failure).
    #[must_use]
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Shape(_) => 2,
            Error::CheckFailed(_) => 4,
            _ => 3,
        }
    }

    /// Stable machine-readable tag for this error class, used by the CLI's
    /// JSON error output.
    #[must_use]
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::EmptyCell { .. } => "empty_cell",
            Error::EmptyGroup { .. } => "empty_group",
            Error::Shape(_) => "shape",
            Error::Contract(_) => "contract",
            Error::Numerical(_) => "numerical",
            Error::BatchComposition(_) => "batch_composition",
            Error::CheckFailed(_) => "check_failed",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_cli_contract() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::Shape("x".into()).exit_code(), 2);
        assert_eq!(Error::CheckFailed("x".into()).exit_code(), 4);
        assert_eq!(
            Error::EmptyCell { y: 0, v: 1, context: "test" }.exit_code(),
            3
        );
        assert_eq!(Error::Numerical("x".into()).exit_code(), 3);
    }

    #[test]
    fn messages_name_the_offending_cell() {
        let e = Error::EmptyCell { y: 1, v: 0, context: "joint statistics" };
        let msg = e.to_string();
        assert!(msg.contains("y=1"), "message should name y: {msg}");
        assert!(msg.contains("v=0"), "message should name v: {msg}");
    }
}
