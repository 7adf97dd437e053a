use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// A text input could not be parsed. `line` is 1-based.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate document id `{0}`")]
    DuplicateDoc(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("not an index file: {0}")]
    NotAnIndex(String),

    #[error("unsupported index version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated index file while reading {0}")]
    Truncated(&'static str),

    #[error("index is already quantized")]
    AlreadyQuantized,

    #[error("operation requires a quantized index")]
    NotQuantized,

    #[error("operation requires raw (unquantized) impacts; rebuild from the vector file")]
    RequiresRaw,

    #[error("missing expansion sidecar: supply the per-document expanded term list")]
    MissingExpansionFlags,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
