use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::message::{unix_now, BusMessage};
use crate::topic::{TopicFilter, TopicName};

pub(crate) type SessionId = u64;

/// Receives messages routed to a session. Called with the registry lock
/// held, so it must not call back into the broker.
pub(crate) type Sink = Arc<dyn Fn(BusMessage) + Send + Sync>;

struct Session {
    patterns: Vec<TopicFilter>,
    sink: Sink,
}

/// In-memory routing table shared by every connection.
///
/// Delivery is at-most-once with no retention. Each session receives a
/// message once when any of its patterns match. Routing happens under one
/// lock, so every subscriber observes publishes in the order the broker
/// accepted them.
pub struct Broker {
    sessions: Mutex<HashMap<SessionId, Session>>,
    next_session: AtomicU64,
}

impl Broker {
    pub fn new() -> Arc<Self> {
        Arc::new(Broker {
            sessions: Mutex::new(HashMap::new()),
            next_session: AtomicU64::new(1),
        })
    }

    pub(crate) fn open_session(&self, sink: Sink) -> SessionId {
        let id = self.next_session.fetch_add(1, Ordering::Relaxed);
        self.sessions.lock().unwrap().insert(
            id,
            Session {
                patterns: Vec::new(),
                sink,
            },
        );
        id
    }

    pub(crate) fn close_session(&self, id: SessionId) {
        self.sessions.lock().unwrap().remove(&id);
    }

    pub(crate) fn add_pattern(&self, id: SessionId, filter: TopicFilter) {
        if let Some(s) = self.sessions.lock().unwrap().get_mut(&id) {
            s.patterns.push(filter);
        }
    }

    pub(crate) fn remove_pattern(&self, id: SessionId, filter: &TopicFilter) {
        if let Some(s) = self.sessions.lock().unwrap().get_mut(&id) {
            if let Some(pos) = s.patterns.iter().position(|p| p == filter) {
                s.patterns.swap_remove(pos);
            }
        }
    }

    /// Routes a message; returns the number of sessions it reached.
    pub(crate) fn route(&self, topic: &TopicName, payload: serde_json::Value, seq: u64) -> usize {
        let sessions = self.sessions.lock().unwrap();
        let msg = BusMessage {
            topic: topic.as_str().to_owned(),
            payload,
            published_at: unix_now(),
            seq,
        };
        let mut delivered = 0;
        for session in sessions.values() {
            if session.patterns.iter().any(|p| p.matches(topic)) {
                (session.sink)(msg.clone());
                delivered += 1;
            }
        }
        delivered
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }
}
