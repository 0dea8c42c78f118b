//! Error type shared by the core modules.

use alloc::string::String;
use core::fmt;

/// Errors raised by core operations. Pure-math paths that cannot fail
/// return values directly; fallible contracts return `Result<_, CoreError>`.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Tensor operands with incompatible shapes; carries both shapes.
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    /// Joint-value vector length does not match the chain's joint count.
    JointCountMismatch { expected: usize, got: usize },
    /// An action or input contained a non-finite value.
    NonFinite(&'static str),
    /// Empty input where at least one element is required.
    Empty(&'static str),
    /// Checkpoint bytes failed to decode.
    BadCheckpoint(String),
    /// Parameter lookup failed or shapes disagreed on a strict load.
    ParamMismatch(String),
    /// Invalid configuration value.
    InvalidConfig(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch {lhs:?} vs {rhs:?}")
            }
            CoreError::JointCountMismatch { expected, got } => {
                write!(f, "joint vector length {got}, chain has {expected} joints")
            }
            CoreError::NonFinite(what) => write!(f, "non-finite value in {what}"),
            CoreError::Empty(what) => write!(f, "{what} must be non-empty"),
            CoreError::BadCheckpoint(msg) => write!(f, "bad checkpoint: {msg}"),
            CoreError::ParamMismatch(msg) => write!(f, "parameter mismatch: {msg}"),
            CoreError::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CoreError {}
