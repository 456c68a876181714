//! Live control station for edgeform missions: a paced session, a WebSocket protocol and
//! the command-line front end.

pub mod artifacts;
pub mod cli;
pub mod server;
pub mod session;
pub mod wire;

use thiserror::Error;

use edgeform::backends::BackendError;
use edgeform::scenario::ScenarioError;
use edgeform::theory::TheoryError;

pub use server::{serve, ServeOptions, Server};
pub use session::Session;
pub use wire::{Body, Phase, WireMessage};

#[derive(Debug, Error)]
pub enum StationError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot {action} while {from:?}")]
    Transition { from: Phase, action: String },
    #[error("bad request: {0}")]
    Request(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("pacing loop stopped: {0}")]
    Pacer(String),
}
