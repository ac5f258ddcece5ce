use thiserror::Error;

use crate::types::Time;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("incomplete certificate: expected {expected} approvals, found {found}")]
    IncompleteCertificate { expected: usize, found: usize },

    #[error("plan infeasible: {0}")]
    Infeasible(String),

    #[error("cannot schedule an event at {due} before current time {now}")]
    ScheduleInPast { due: Time, now: Time },

    #[error("unknown path id {path_id} (block has {paths} paths)")]
    UnknownPath { path_id: u32, paths: u32 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
