use thiserror::Error;

/// Errors produced by the numerics, model, engine and evaluation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("softmax row is fully masked")]
    FullyMasked,

    #[error("rotary embedding needs an even width, got {0}")]
    OddDimension(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("cannot train a vocabulary on an empty corpus")]
    EmptyCorpus,

    #[error("token id {0} is not in the vocabulary")]
    UnknownToken(u32),

    #[error("token id {0} is a reserved placeholder and has no text")]
    PlaceholderToken(u32),

    #[error("template error: {0}")]
    Template(String),

    #[error("position {position} out of range for sequence of length {len}")]
    OutOfRange { position: usize, len: usize },

    #[error("kv cache does not match the sequence: {0}")]
    CacheMismatch(String),

    #[error("correlation undefined: {0} input is constant")]
    ConstantInput(&'static str),

    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("malformed {kind} file: {msg}")]
    Format { kind: &'static str, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn format(kind: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            kind,
            msg: msg.into(),
        }
    }
}
