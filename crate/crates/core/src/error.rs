use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("symbol {symbol} at position {position} is out of range for a model with {n_symbols} symbols")]
    SymbolOutOfRange {
        symbol: u32,
        position: usize,
        n_symbols: usize,
    },

    #[error("observation sequence is empty")]
    EmptySequence,

    /// The sequence has probability zero under the model, so backward
    /// variables (and posteriors) are undefined.
    #[error("observation sequence has zero probability under the model")]
    ZeroLikelihood,

    #[error("unusable sample {0}: no mnemonics after parsing")]
    UnusableSample(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
