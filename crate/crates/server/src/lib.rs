//! Experiment server for two-player colexification games: lobby pairing,
//! live play over WebSocket, consent and feedback capture, and durable
//! per-dyad logs.

pub mod config;
pub mod http;
pub mod hub;
pub mod protocol;
pub mod store;

use thiserror::Error;

pub use config::ExperimentConfig;
pub use http::{router, serve, spawn, RunningServer};
pub use hub::{Hub, JoinOutcome};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum HubError {
    #[error("consent is required to join")]
    ConsentRequired,
    #[error("unknown token")]
    UnknownToken,
    #[error("admin token rejected")]
    Forbidden,
    #[error("cannot set up a game: {0}")]
    Generation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
