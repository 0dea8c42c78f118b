//! Error type for the std layer. Exit codes: 1 for validation failures,
//! 2 for runtime failures.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DexkitError {
    /// Config/argument validation problems, listed exhaustively.
    #[error("validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error(transparent)]
    Core(#[from] dexkit_core::CoreError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Runtime(String),
}

impl DexkitError {
    pub fn exit_code(&self) -> i32 {
        match self {
            DexkitError::Validation(_) => 1,
            _ => 2,
        }
    }

    pub fn runtime(msg: impl Into<String>) -> DexkitError {
        DexkitError::Runtime(msg.into())
    }
}
