use thiserror::Error;

use crate::simplex::LpError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid wiring: {0}")]
    InvalidWiring(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
