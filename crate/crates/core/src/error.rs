use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("action component `{component}` = {value} exceeds bound {bound}")]
    ActionOutOfBounds {
        component: &'static str,
        value: f64,
        bound: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,

    #[error("standard deviation must be positive, got {0}")]
    NonPositiveStd(f64),

    #[error("sequence too short: need at least {need} entries, got {got}")]
    SequenceTooShort { need: usize, got: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("no collision-free path between start and goal")]
    Unreachable,

    #[error("scenario generation exhausted after {attempts} attempts")]
    GenerationExhausted { attempts: usize },

    #[error("initial distance must be positive for normalized error")]
    ZeroInitialDistance,

    #[error("oracle path length must be positive, got {0}")]
    NonPositiveOracleLength(f64),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
