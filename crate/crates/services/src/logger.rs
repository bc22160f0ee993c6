//! Continuous logging of idle telemetry to the historian's live log.

use std::sync::Arc;
use std::time::Duration;

use crane_twin_bus::{topics, BusClient};
use crane_twin_historian::Historian;
use tokio::task::JoinHandle;

use crate::error::Result;
use crate::payloads::StatusSnapshot;

/// Appends every `crane/state` sample taken outside a run to the live log.
/// Run samples are stored with their run by the crane itself.
pub async fn spawn(bus: BusClient, historian: Arc<Historian>) -> Result<JoinHandle<()>> {
    let mut states = bus.subscribe(topics::CRANE_STATE).await?;
    Ok(tokio::spawn(async move {
        let period = historian.logger_config().buffer_flush_period;
        let mut flush = tokio::time::interval(Duration::from_secs_f64(period));
        loop {
            tokio::select! {
                msg = states.recv() => {
                    let Some(msg) = msg else { break };
                    let Ok(snap) = serde_json::from_value::<StatusSnapshot>(msg.payload) else {
                        continue;
                    };
                    if snap.run_id.is_none() {
                        if let Err(e) = historian.append_live(&snap.state) {
                            tracing::warn!("live log write failed: {e}");
                        }
                    }
                }
                _ = flush.tick() => {
                    if let Err(e) = historian.flush_live() {
                        tracing::warn!("live log flush failed: {e}");
                    }
                }
            }
        }
        let _ = historian.flush_live();
    }))
}
