use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("spin index {index} out of range for a chain of {n} spins")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("state has {got} spins but the chain has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("addressing error: {0}")]
    Addressing(String),
    #[error("numerical integrity: {0}")]
    NumericalIntegrity(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("pulse {ordinal}: {source}")]
    AtPulse {
        ordinal: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn at_pulse(self, ordinal: usize) -> Self {
        match self {
            e @ Error::AtPulse { .. } => e,
            e => Error::AtPulse { ordinal, source: Box::new(e) },
        }
    }
}
