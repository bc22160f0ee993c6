use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// A message as delivered to subscribers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusMessage {
    pub topic: String,
    pub payload: Value,
    /// Seconds since the Unix epoch, stamped by the broker.
    pub published_at: f64,
    /// Per-publisher-connection counter, strictly increasing.
    pub seq: u64,
}

pub(crate) fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Wire frames: one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Frame {
    Sub {
        pattern: String,
    },
    Unsub {
        pattern: String,
    },
    Pub {
        topic: String,
        payload: Value,
    },
    Msg {
        topic: String,
        payload: Value,
        seq: u64,
        #[serde(default)]
        published_at: f64,
    },
    Suback {
        pattern: String,
    },
    Unsuback {
        pattern: String,
    },
    Err {
        message: String,
    },
}

impl Frame {
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("frame serializes");
        line.push('\n');
        line
    }
}
