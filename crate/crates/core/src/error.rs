use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {what}: {message}")]
    Parse { what: String, message: String },

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("invalid parameter {name}: {message}")]
    InvalidParam { name: &'static str, message: String },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("log is missing the {0} stream")]
    MissingStream(&'static str),

    #[error("invalid log: {0}")]
    InvalidLog(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParam { name, message: message.into() }
    }
}
