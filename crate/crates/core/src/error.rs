use thiserror::Error;

/// Errors raised by the numerical substrate, the models and the metrics.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a shape or size contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("singular system: {0}")]
    Singular(String),

    /// Non-finite values appeared during training or evaluation.
    #[error("numeric failure at epoch {epoch}, batch {batch}: {context}")]
    NumericFailure {
        epoch: usize,
        batch: usize,
        context: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("{0} cannot be serialized")]
    NotSerializable(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
