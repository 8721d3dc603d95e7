use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numerical breakdown: {0}")]
    NonFinite(String),

    #[error("non-finite gradient at SGD step {step}")]
    NonFiniteGradient { step: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("misaligned histories: {0}")]
    Misaligned(String),

    #[error("policy `{policy}` returned K_n = {k} outside [{min}, {max}] at step {step}")]
    PolicyBounds {
        policy: String,
        step: usize,
        k: u64,
        min: u64,
        max: u64,
    },

    #[error("csv stream: {0}")]
    Csv(String),

    #[error("csv stream: step {step} has {available} rows but {requested} were requested")]
    PoolExhausted {
        step: usize,
        requested: usize,
        available: usize,
    },

    #[error("single-class input: ROC AUC needs both positive and negative labels")]
    SingleClass,

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user-supplied configuration rather than by
    /// the simulation itself.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::InvalidParameter { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
