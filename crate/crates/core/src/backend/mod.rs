//! Client side of the line-delimited JSON model-server protocol, plus an
//! in-process mock server implementing the same protocol.

mod client;
pub mod mock;
pub mod protocol;
mod remote;

pub use client::{BackendClient, BackendConfig, Session, Transport, BACKEND_ENV};
pub use mock::MockServer;
pub use protocol::{load_fixtures, ErrorCode, Fixture, Request, Response};
pub use remote::{RemotePropertyScorer, RemoteTokenScorer, REMOTE_NORMALIZATION_TOL};
