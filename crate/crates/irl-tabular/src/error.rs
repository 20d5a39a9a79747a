//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mdp: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid reward parameter: {0}")]
    InvalidParam(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration cap exceeded: {required} deterministic policies, cap {cap}")]
    CapExceeded { required: u128, cap: u128 },

    #[error("feedback option mismatch: dataset uses option {dataset}, config expects option {config}")]
    OptionMismatch { dataset: u8, config: u8 },

    #[error("empty set: {0}")]
    EmptySet(&'static str),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: validation-style failures map to 2.
    pub fn exit_code(&self) -> i32 {
        2
    }
}
