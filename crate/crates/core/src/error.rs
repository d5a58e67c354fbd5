use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid ranking: {0}")]
    InvalidRanking(String),

    #[error("self-loop on product {0} is not a valid ordering edge")]
    SelfLoop(usize),

    #[error("product {product} out of range for {n} products")]
    ProductOutOfRange { product: usize, n: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("corrupt observation: {0}")]
    CorruptObservation(String),

    #[error("invalid adversary: {0}")]
    InvalidAdversary(String),

    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("unknown scenario `{name}` (available: {})", available.join(", "))]
    UnknownScenario {
        name: String,
        available: Vec<String>,
    },

    #[error("event log: {0}")]
    EventLog(String),

    #[error("budget violated: {0}")]
    Budget(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by user input rather than a failure during a run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInstance(_)
                | Error::InvalidAdversary(_)
                | Error::Config { .. }
                | Error::UnknownScenario { .. }
                | Error::Json(_)
        )
    }
}
