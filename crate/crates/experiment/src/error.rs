use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("every UE position is blocked: {blocked} of {total} samples in outage ({percent:.1}%)")]
    AllBlocked { blocked: usize, total: usize, percent: f64 },

    #[error("dataset was generated from a different config (file hash {found}, config hash {expected})")]
    HashMismatch { expected: String, found: String },

    #[error("{model}: {source}")]
    Model {
        model: String,
        #[source]
        source: chanest_neural::Error,
    },

    #[error(transparent)]
    Core(#[from] chanest_core::Error),

    #[error(transparent)]
    Neural(#[from] chanest_neural::Error),

    #[error(transparent)]
    Adapt(#[from] chanest_adapt::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn dataset_err(msg: impl Into<String>) -> Error {
    Error::Dataset(msg.into())
}

/// Process exit codes of the `chanest` binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DIVERGED: i32 = 3;
    pub const IO: i32 = 4;
}

fn neural_code(e: &chanest_neural::Error) -> i32 {
    match e {
        chanest_neural::Error::TrainingDiverged { .. } => exit::DIVERGED,
        chanest_neural::Error::Io(_) => exit::IO,
        _ => exit::CONFIG,
    }
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => exit::IO,
            Error::Model { source, .. } | Error::Neural(source) => neural_code(source),
            Error::Adapt(chanest_adapt::Error::Neural(source)) => neural_code(source),
            _ => exit::CONFIG,
        }
    }
}
