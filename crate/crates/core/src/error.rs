use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem instance: {0}")]
    InvalidInstance(String),

    #[error("invalid tuning constants: {0}")]
    InvalidConstants(String),

    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("no feasible constants: {0}")]
    Infeasible(String),

    #[error("error budget allocation violates the union bound: {0}")]
    Allocation(String),

    #[error("codebook: {0}")]
    Codebook(#[from] CodebookError),

    #[error("forged sequence has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("coalition has no active members")]
    EmptyCoalition,

    #[error("user {0} is not an active coalition member")]
    UnknownUser(u64),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("checksum failure: {0}")]
    Checksum(String),
}

pub(crate) fn domain(what: &'static str, value: f64, domain: &'static str) -> Error {
    Error::Domain {
        what,
        value,
        domain,
    }
}
