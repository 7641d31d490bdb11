use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("reward list is empty")]
    EmptyRewards,
    #[error("discount factor {0} outside (0, 1]")]
    InvalidGamma(f64),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("next-state values are empty for a non-terminal transition")]
    EmptyNextValues,
    #[error("option duration must be at least 1")]
    ZeroDuration,
    #[error("invalid bounds: low {low} must be below high {high}")]
    InvalidBounds { low: f64, high: f64 },
    #[error("illegal grid state: {0}")]
    IllegalState(String),
    #[error("episode already terminated")]
    EpisodeDone,
    #[error("unknown option id {0}")]
    UnknownOption(usize),
    #[error("value iteration did not converge in {sweeps} sweeps (residual {residual:e})")]
    NotConverged { sweeps: usize, residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("architecture mismatch: {0:?} vs {1:?}")]
    ArchitectureMismatch(Vec<usize>, Vec<usize>),
    #[error("empty minibatch")]
    EmptyMinibatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("probabilities must be nonnegative and not all zero")]
    InvalidProbabilities,
    #[error("behavioral cloner required for {0}")]
    MissingCloner(&'static str),
    #[error("oracle was computed for {oracle} but the dataset targets {requested}")]
    OracleMismatch { oracle: String, requested: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
