//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),

    #[error("malformed episode `{episode}`: {reason}")]
    MalformedEpisode { episode: String, reason: String },

    #[error("parse error at row {row}: {reason}")]
    Parse { row: usize, reason: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("empty term: a term must contain at least one course row")]
    EmptyTerm,

    #[error("state id {id} out of range (n_states = {n_states})")]
    StateOutOfRange { id: usize, n_states: usize },

    #[error("behavior policy assigns zero probability to logged pair (s={state}, a={action})")]
    UnsupportedAction { state: usize, action: usize },

    #[error("ope score undefined: {0}")]
    UndefinedScore(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Coarse failure class, used by callers (the CLI in particular) to map
/// errors onto distinct exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::MissingColumn(_)
            | Error::MalformedEpisode { .. }
            | Error::Parse { .. }
            | Error::InsufficientData(_)
            | Error::EmptyTerm
            | Error::StateOutOfRange { .. }
            | Error::UnsupportedAction { .. }
            | Error::Format(_) => ErrorClass::Data,
            Error::UndefinedScore(_) | Error::Numerical(_) => ErrorClass::Numerical,
            Error::Io(_) | Error::Serde(_) => ErrorClass::Io,
        }
    }
}
