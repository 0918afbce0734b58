use alloc::string::String;

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HmeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed tree: {0}")]
    Structural(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numerical failure at iteration {iteration}: {term}")]
    Numerical { iteration: usize, term: String },
    #[error("model selection failed: {0}")]
    Selection(String),
}

pub type Result<T> = core::result::Result<T, HmeError>;
