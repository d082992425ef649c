use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Neural(#[from] chanest_neural::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
