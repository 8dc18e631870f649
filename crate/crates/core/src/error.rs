use thiserror::Error;

/// Errors shared across the trellis, code, transform, and container layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid trellis parameters: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("instance too large for exhaustive search: {0} bits exceeds cap of {1}")]
    InstanceTooLarge(usize, usize),
    #[error("state path violates the bitshift edge rule at group {0}")]
    InvalidPath(usize),
    #[error("path is not tail-biting: first/last overlap bits differ")]
    NotTailBiting,
    #[error("overlap value {0} out of range for {1} overlap bits")]
    OverlapOutOfRange(u32, u32),
    #[error("lookup table has {got} entries, expected {expected}")]
    LutSize { got: usize, expected: usize },
    #[error("unsupported transform length {0}: not a power of two times a registered base")]
    UnsupportedLength(usize),
    #[error("not a Hadamard matrix: {0}")]
    BadHadamard(String),
    #[error("matrix has zero Frobenius norm")]
    ZeroMatrix,
    #[error("block factorization failed at pivot block {0}: matrix not positive definite (raise the regularization factor)")]
    NotPositiveDefinite(usize),
    #[error("container format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
