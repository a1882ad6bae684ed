use thiserror::Error;

/// Errors raised by the library. Each variant names the offending input
/// closely enough that a caller can report it without extra context.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("quantile root-finding failed for q = {q}: {reason}")]
    Quantile { q: f64, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("stratum {stratum}: {reason}")]
    Stratum { stratum: String, reason: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("sampler failure in chain {chain} at sweep {sweep}; state dump: {state}")]
    NonFinite {
        chain: usize,
        sweep: usize,
        state: String,
    },

    #[error("insufficient draws: {0}")]
    InsufficientDraws(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            message: message.to_string(),
        }
    }
}
