use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    /// Raised when merge inputs disagree, e.g. an addition merge fed an
    /// unprojected skip feature.
    #[error("merge shape mismatch: {0}")]
    MergeShape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("backward called on an empty tape")]
    EmptyTape,

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("tensor format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
