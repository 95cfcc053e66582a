//! Subject router served over TCP.
//!
//! Delivery is at-most-once with no persistence. Messages from one publisher
//! reach each matching subscription in publish order. A publish that meets
//! a full outbound queue waits for room; if the queue is still full after
//! `slow_consumer_grace`, the receiving session is dropped with
//! `-ERR slow consumer`.

mod client;
mod router;
mod server;

use thiserror::Error;

pub use client::{Client, Message};
pub use router::{Delivery, Router, SessionId};
pub use server::{serve, BrokerHandle, BrokerLimits, BrokerStats};

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("sid {0} already in use on this session")]
    DuplicateSid(u64),
    #[error("not connected")]
    Disconnected,
    #[error("timed out waiting for the broker")]
    Timeout,
    #[error(transparent)]
    Wire(#[from] crate::wire::WireError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
