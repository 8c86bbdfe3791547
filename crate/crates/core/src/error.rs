use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the pipeline.
///
/// The variants map onto the CLI exit-code classes: `Dimension` and
/// `Config` are usage/config problems, `Parse`, `Data`, `DegenerateData`
/// and `Io` are data problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error: {0}")]
    Parse(#[from] ParseError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Parse failures from the file-format readers. Each carries the byte
/// offset or line number where the problem was found.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },

    #[error("unsupported codec at byte {offset}: {reason}")]
    UnsupportedCodec { offset: usize, reason: String },

    #[error("truncated data at byte {offset}: expected {expected} bytes, found {found}")]
    Truncated {
        offset: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },

    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
