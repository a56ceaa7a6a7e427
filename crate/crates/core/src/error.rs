use thiserror::Error;

#[derive(Debug, Error)]
pub enum KmpeError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular system: numerical rank {rank} of {dim} (rank deficiency {})", dim - rank)]
    Singular { rank: usize, dim: usize },

    #[error("iteration diverged at step {iteration}: non-finite objective")]
    Divergence { iteration: usize },

    #[error("degenerate weights: all sample weights are zero")]
    DegenerateWeights,

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid model record: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KmpeError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(KmpeError::Domain(msg.into()))
}

pub(crate) fn dimension<T>(msg: impl Into<String>) -> Result<T> {
    Err(KmpeError::Dimension(msg.into()))
}
