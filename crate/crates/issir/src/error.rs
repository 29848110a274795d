//! Error types shared across the library.

use thiserror::Error;

/// Errors raised by analysis, reconstruction and coding operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("degenerate objective: target magnitudes are all zero")]
    DegenerateObjective,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("spacing violation: transient frames {0} and {1} closer than two large windows")]
    SpacingViolation(usize, usize),

    #[error("no sources")]
    NoSources,

    #[error("target rate unreachable: best achieved {best_rate:.3} kb/source/s")]
    RateUnreachable { best_rate: f64 },

    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Errors raised while parsing a side-information bitstream.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic")]
    BadMagic,

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated stream: needed {needed} bytes, had {available}")]
    Truncated { needed: usize, available: usize },

    #[error("checksum mismatch")]
    ChecksumMismatch,

    #[error("corrupt stream: {0}")]
    Corrupt(String),
}

pub type Result<T> = std::result::Result<T, Error>;
