use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("capacity exceeded: requested dimension {requested}, limit {limit}")]
    Capacity { requested: usize, limit: usize },

    #[error("degenerate: {0}")]
    Degeneracy(String),

    #[error("rank deficiency at level {level}: expected rank {expected}, found {found}")]
    RankDeficiency {
        level: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid eigenvalue schedule: {0}")]
    Schedule(String),

    #[error("parity mismatch: {0}")]
    Parity(String),

    #[error("action does not permute classes: points {x} and {y} are joined but their images under generator {generator} are not")]
    Invariance { generator: usize, x: usize, y: usize },

    #[error("actions do not commute on basis element {basis_index} (deviation {deviation:.3e})")]
    Commutation { basis_index: usize, deviation: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
