use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CertError {
    #[error("structural error: {0}")]
    Structure(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inconsistent certificates: {0}")]
    Inconsistent(String),

    #[error("instance too large: {0}")]
    TooLarge(String),
}

pub type Result<T> = std::result::Result<T, CertError>;
