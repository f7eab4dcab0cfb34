use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("distribution not normalized: log-sum-exp = {0:e}")]
    Unnormalized(f64),

    #[error("tokenizer cannot round-trip `{0}`")]
    RoundTrip(String),

    #[error("token `{0}` not in vocabulary")]
    UnknownToken(String),

    #[error("leakage: {0}")]
    Leakage(String),

    #[error("backend timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("protocol error: {message} (payload: {payload})")]
    Protocol { message: String, payload: String },

    #[error("backend error [{code}]: {message}")]
    Backend { code: String, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn protocol(message: impl Into<String>, payload: impl Into<String>) -> Self {
        Error::Protocol {
            message: message.into(),
            payload: payload.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Errors after which the backend client may reconnect and try again.
    pub fn is_retriable(&self) -> bool {
        match self {
            Error::Timeout(_) | Error::Io(_) => true,
            Error::Context { source, .. } => source.is_retriable(),
            _ => false,
        }
    }
}
