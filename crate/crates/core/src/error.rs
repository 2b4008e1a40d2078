use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain {0} contains no origin-centred corner set")]
    NoCornerSet(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("binary loss sequence exhausted after {0} rounds")]
    SequenceExhausted(usize),

    #[error("loss channel mismatch: {0}")]
    ChannelMismatch(String),

    #[error("incompatible experiment: {0}")]
    Incompatible(String),

    #[error("corrupted loss channel: {0}")]
    CorruptedChannel(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
