use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("insufficient input: need {needed:.3} s, got {got:.3} s")]
    InsufficientInput { needed: f64, got: f64 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("codec error: {0}")]
    Codec(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("incomplete event log, missing events for chunks {0:?}")]
    IncompleteLog(Vec<u32>),
    #[error("no played events in log")]
    EmptyPlayback,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Socket(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
