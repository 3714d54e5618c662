use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A value outside an operation's domain (bad geometry, empty path list, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Interchange file could not be parsed.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("no prediction for ue {ue}, frame {frame}")]
    MissingPrediction { ue: usize, frame: usize },

    /// The power-allocation fixed point did not settle; `trace` holds the
    /// last few max-|dp| values.
    #[error("power allocation did not converge after {iterations} iterations (mu = {mu:e})")]
    NotConverged {
        iterations: usize,
        mu: f64,
        trace: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
