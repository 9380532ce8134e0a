use std::io;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("series shorter than one period (length {len}, period {period})")]
    SeriesTooShort { len: usize, period: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("diverged: {0}")]
    Diverged(String),

    #[error("cannot stratify: {0}")]
    Stratify(String),

    #[error("batch norm needs at least 2 samples per batch in train mode")]
    BatchTooSmall,

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("not a checkpoint (bad magic bytes)")]
    NotCheckpoint,

    #[error("unsupported checkpoint version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checkpoint truncated while reading {0}")]
    Truncated(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("image encoding failed: {0}")]
    Image(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
