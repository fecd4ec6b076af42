use std::net::SocketAddr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("client disconnected")]
    ClientDisconnected,
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("a client is already connected to this session")]
    SessionBusy,
    #[error("session engine stopped")]
    EngineStopped,
    #[error(transparent)]
    Session(#[from] purrfect_core::session::SessionError),
    #[error(transparent)]
    Datastore(#[from] purrfect_core::datastore::DatastoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
