//! Error type shared across the crate.
//!
//! Every fallible operation returns [`Error`]. The variants partition failures
//! by what the caller can do about them: fix the input, retry with different
//! numerics, load matching artifacts, and so on. The CLI maps each variant to
//! a stable slug (`invalid-input`, `numerical`, ...) so scripts can branch on
//! the first line of stderr.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed data that violates a documented precondition
    /// (wrong dimensions, non-finite values, out-of-range parameters).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A linear-algebra step failed in a way that jitter escalation or
    /// clamping could not absorb (Cholesky breakdown, negative variance
    /// beyond rounding, responsibility underflow).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An iterative procedure ran out of its repair or iteration budget.
    #[error("failed to converge: {0}")]
    Convergence(String),

    /// Operation requires state the object does not hold
    /// (e.g. a patient profile that lacks the requested body part).
    #[error("invalid state: {0}")]
    State(String),

    /// A file was syntactically or structurally malformed.
    #[error("parse error: {0}")]
    Parse(String),

    /// Artifacts do not belong together (checksum or version mismatch
    /// between a model file and the data or profile it is used with).
    #[error("incompatible artifacts: {0}")]
    Compatibility(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable tag for CLI error lines.
    pub fn slug(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::Numerical(_) => "numerical",
            Error::Convergence(_) => "convergence",
            Error::State(_) => "invalid-state",
            Error::Parse(_) => "parse",
            Error::Compatibility(_) => "incompatible",
            Error::Io(_) => "io",
        }
    }

    /// The variant's message without the category prefix, for contexts
    /// that already print the slug.
    pub fn detail(&self) -> String {
        match self {
            Error::InvalidInput(m)
            | Error::Numerical(m)
            | Error::Convergence(m)
            | Error::State(m)
            | Error::Parse(m)
            | Error::Compatibility(m) => m.clone(),
            Error::Io(e) => e.to_string(),
        }
    }

    /// Process exit code the CLI uses for this variant. 0 is success,
    /// 2 is reserved by clap for usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) => 3,
            Error::Numerical(_) => 4,
            Error::Convergence(_) => 5,
            Error::State(_) => 6,
            Error::Parse(_) => 7,
            Error::Compatibility(_) => 8,
            Error::Io(_) => 9,
        }
    }
}
