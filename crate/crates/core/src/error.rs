use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("state error: {0}")]
    State(String),
    #[error("non-deterministic loss: {0}")]
    Diagnostic(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("degenerate scene: {0}")]
    DegenerateScene(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: mean loss {loss}")]
    Training { epoch: usize, loss: f64 },
    #[error("model file error: {0}")]
    ModelFormat(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::InvalidShape(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
