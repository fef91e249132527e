use thiserror::Error;

#[derive(Debug, Error)]
pub enum HowdeError {
    #[error("user {user}: stop {second} overlaps stop {first}")]
    OverlappingStops {
        user: String,
        first: String,
        second: String,
    },

    #[error("user {user}: stop at {loc} has end {end} <= start {start}")]
    EmptyStop {
        user: String,
        loc: String,
        start: i64,
        end: i64,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("protocol mismatch: {0}")]
    ProtocolMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = HowdeError> = std::result::Result<T, E>;
