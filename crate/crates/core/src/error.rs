use std::path::PathBuf;

use thiserror::Error;

use crate::model::Group;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A probability vector or table violates its normalization invariant.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyData(String),

    /// A group with positive mass received no deconfounded samples and the
    /// caller asked for strict estimation.
    #[error("group (y={}, t={}) has positive mass but no deconfounded samples", .0.y, .0.t)]
    DegenerateGroup(Group),

    #[error(
        "group (y={}, t={}) exhausted: requested {requested}, only {available} hidden records remain",
        group.y,
        group.t
    )]
    Exhausted {
        group: Group,
        requested: u64,
        available: u64,
    },

    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
