use thiserror::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument is outside the supported domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A frame region is too small to contain the requested construction,
    /// including any safety margin the construction documents.
    #[error("frame too small: {0}")]
    FrameTooSmall(String),

    /// A numeric function was evaluated outside its domain of definition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A serialized configuration or field failed to decode.
    #[error("decode error: {0}")]
    Decode(#[from] DecodeError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// An internal invariant that should hold by construction was violated.
    /// Seeing this error is always a bug.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

/// Failure modes of the binary file format.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic bytes (expected \"FPPC\")")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated")]
    Truncated,
    #[error("checksum mismatch")]
    CrcMismatch,
    #[error("trailing bytes after payload")]
    TrailingBytes,
    #[error("unknown region shape tag {0}")]
    BadShape(u8),
    #[error("unknown flag bits {0:#04x}")]
    BadFlags(u8),
    #[error("region described by header is invalid: {0}")]
    BadRegion(String),
}
