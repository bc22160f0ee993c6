//! Continuous validation: measured against simulated traces of each run.

use std::collections::HashMap;
use std::sync::Arc;

use chrono::Utc;
use crane_twin_bus::{topics, BusClient};
use crane_twin_core::{compare_traces, TraceKind};
use crane_twin_historian::{Historian, RunStatus, ValidationReport};
use tokio::task::JoinHandle;

use crate::config::SharedConfig;
use crate::error::{Result, ServiceError};
use crate::payloads::{Alert, RunCompleted, SimulationResult};

#[derive(Clone)]
pub struct Validator {
    historian: Arc<Historian>,
    config: SharedConfig,
    bus: BusClient,
}

impl Validator {
    pub fn new(historian: Arc<Historian>, config: SharedConfig, bus: BusClient) -> Self {
        Validator {
            historian,
            config,
            bus,
        }
    }

    /// Compares the stored measured and simulated traces of a run under the
    /// current thresholds, stores the report and publishes it. A failing
    /// report is also published as an alert.
    pub fn validate_run(&self, run_id: &str) -> Result<ValidationReport> {
        let measured = self
            .historian
            .query_trace(run_id, TraceKind::Measured, None, None)?;
        let simulated = self
            .historian
            .query_trace(run_id, TraceKind::Simulated, None, None)?;
        let (thresholds, band) = {
            let cfg = self.config.read().unwrap();
            (cfg.thresholds, cfg.dtw_band)
        };
        let thresholds = thresholds
            .ok_or_else(|| ServiceError::State("validation thresholds are not configured".into()))?;
        let results = compare_traces(&measured, &simulated, &thresholds.checks(), band)?;
        let report = self
            .historian
            .store_report(&ValidationReport::new(run_id, results))?;
        self.bus.publish_json(topics::VALIDATION_REPORT, &report)?;
        if !report.overall_pass {
            let failed: Vec<_> = report.failed().copied().collect();
            let names: Vec<String> = failed
                .iter()
                .map(|r| format!("{}.{}", r.signal.as_str(), r.metric.as_str()))
                .collect();
            let alert = Alert {
                run_id: run_id.to_string(),
                created_at: Utc::now(),
                message: format!("run {run_id} exceeded thresholds: {}", names.join(", ")),
                failed,
            };
            self.bus.publish_json(topics::VALIDATION_ALERT, &alert)?;
        }
        Ok(report)
    }

    /// Validates each run once both its completion and its simulation have
    /// been announced.
    pub async fn spawn(self) -> Result<JoinHandle<()>> {
        let mut completed = self.bus.subscribe(topics::RUN_COMPLETED).await?;
        let mut simulated = self.bus.subscribe(topics::SIMULATION_RESULT).await?;
        Ok(tokio::spawn(async move {
            // run id -> (run completed, simulation stored)
            let mut pending: HashMap<String, (bool, bool)> = HashMap::new();
            loop {
                let run_id = tokio::select! {
                    msg = completed.recv() => {
                        let Some(msg) = msg else { break };
                        let Ok(done) = serde_json::from_value::<RunCompleted>(msg.payload) else {
                            continue;
                        };
                        if done.status != RunStatus::Completed {
                            pending.remove(&done.run_id);
                            continue;
                        }
                        pending.entry(done.run_id.clone()).or_default().0 = true;
                        done.run_id
                    }
                    msg = simulated.recv() => {
                        let Some(msg) = msg else { break };
                        let Ok(res) = serde_json::from_value::<SimulationResult>(msg.payload) else {
                            continue;
                        };
                        let Some(run_id) = res.run_id else { continue };
                        if res.error.is_some() {
                            pending.remove(&run_id);
                            continue;
                        }
                        pending.entry(run_id.clone()).or_default().1 = true;
                        run_id
                    }
                };
                if pending.get(&run_id) == Some(&(true, true)) {
                    pending.remove(&run_id);
                    let v = self.clone();
                    tokio::task::spawn_blocking(move || {
                        if let Err(e) = v.validate_run(&run_id) {
                            tracing::warn!("validation of run {run_id} failed: {e}");
                        }
                    });
                }
            }
        }))
    }
}
