use thiserror::Error;

/// Errors produced across the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cannot pool an empty set of vectors")]
    EmptyPool,

    #[error("answer has no in-vocabulary tokens")]
    Unencodable,

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("no candidate could be scored")]
    NoDecision,

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Short stable identifier used in machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::Shape(_) => "shape",
            Error::EmptyPool => "empty-pool",
            Error::Unencodable => "unencodable",
            Error::ZeroNorm => "zero-norm",
            Error::NoDecision => "no-decision",
            Error::InsufficientSamples { .. } => "insufficient-samples",
            Error::Parse { .. } => "parse",
            Error::Data(_) => "data",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
