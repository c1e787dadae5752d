use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus: no messages survive preprocessing")]
    EmptyCorpus,

    #[error("holdout fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),

    #[error("{path}:{line}: {msg}")]
    Format {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("community vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("unknown node {0}")]
    UnknownNode(String),

    #[error("pair ({0}, {1}) was not held out from training")]
    PairNotHeldOut(usize, usize),

    #[error("latent state inconsistent with corpus: {0}")]
    InconsistentState(String),

    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
