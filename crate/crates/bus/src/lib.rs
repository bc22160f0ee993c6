//! Minimal topic-based publish/subscribe messaging for the twin's services.
//!
//! A [`Broker`] routes messages between sessions. Clients connect either
//! in-process ([`BusClient::loopback`]) or over TCP through a
//! [`BrokerServer`], using newline-delimited JSON frames:
//!
//! ```text
//! client -> broker  {"op":"sub","pattern":"crane/#"}
//!                   {"op":"unsub","pattern":"crane/#"}
//!                   {"op":"pub","topic":"crane/state","payload":{...}}
//! broker -> client  {"op":"msg","topic":"crane/state","payload":{...},"seq":7,"published_at":...}
//!                   {"op":"suback","pattern":"crane/#"}
//!                   {"op":"unsuback","pattern":"crane/#"}
//!                   {"op":"err","message":"..."}
//! ```
//!
//! Delivery is at-most-once; nothing is retained.

mod broker;
mod client;
mod error;
mod message;
mod server;
pub mod topic;
pub mod topics;

pub use broker::Broker;
pub use client::{BusClient, Subscription};
pub use error::BusError;
pub use message::{BusMessage, Frame};
pub use server::BrokerServer;
pub use topic::{topic_matches, TopicFilter, TopicName};
