//! Threshold calibration from a seeded nominal run.

use std::path::Path;
use std::sync::Arc;

use crane_twin_bus::{topics, Broker, BusClient};
use crane_twin_core::{compare_traces, CraneState, Metric, MetricResult, ProfileMode, Signal, TraceKind};
use crane_twin_historian::{Historian, RunStatus};
use serde::{Deserialize, Serialize};

use crate::config::{shared, Thresholds, TwinConfig};
use crate::crane::VirtualCrane;
use crate::error::{Result, ServiceError};
use crate::payloads::{RunCompleted, RunStarted, SimulationRequest};
use crate::plant::Plant;
use crate::{generator, simulator};

/// Thresholds are this multiple of the calibration run's metric values.
pub const HEADROOM: f64 = 5.0;

/// Smallest threshold per signal, so a signal that matches exactly during
/// calibration still tolerates rounding.
pub fn threshold_floor(signal: Signal) -> f64 {
    match signal {
        Signal::X | Signal::L => 1e-4,
        Signal::Theta => 1e-4,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub run_id: String,
    /// Metric values of the calibration run.
    pub values: Vec<MetricResult>,
    pub thresholds: Thresholds,
}

/// Fresh plant built from the configuration's seed and initial pose.
pub fn seeded_plant(cfg: &TwinConfig) -> Result<Plant> {
    Plant::new(
        cfg.params,
        cfg.sensors,
        cfg.wind,
        cfg.seed,
        cfg.plant_dt,
        CraneState::at_rest(cfg.motion.initial_x, cfg.motion.initial_l),
    )
}

/// Runs the nominal reference sequence (home, zero, shaped move to half the
/// cart travel) on a private pipeline with the configured seed, simulates
/// it, and derives thresholds from the measured distances. The run is kept
/// under `<root>` for inspection.
pub async fn calibrate(cfg: &TwinConfig, root: &Path) -> Result<Calibration> {
    let mut cfg = cfg.clone();
    cfg.time_scale = 0.0;
    cfg.thresholds = None;
    if root.exists() {
        std::fs::remove_dir_all(root)
            .map_err(|e| ServiceError::Internal(format!("cannot reset {}: {e}", root.display())))?;
    }
    let historian = Arc::new(Historian::open(root, cfg.logger)?);
    let config = shared(cfg.clone());
    let broker = Broker::new();
    let bus = BusClient::loopback(&broker);
    let gen = generator::spawn(bus.clone(), config.clone()).await?;
    let mut started = bus.subscribe(topics::RUN_STARTED).await?;
    let mut completed = bus.subscribe(topics::RUN_COMPLETED).await?;
    let (crane, task) = VirtualCrane::spawn(seeded_plant(&cfg)?, &config, bus.clone(), historian.clone()).await?;

    let outcome = async {
        crane.home().await?;
        crane.zero().await?;
        let target = 0.5 * cfg.params.cart_travel_max;
        let handle = crane.move_to(target, ProfileMode::ZvShaped).await?;
        loop {
            let msg = completed
                .recv()
                .await
                .ok_or_else(|| ServiceError::Internal("bus closed during calibration".into()))?;
            let done: RunCompleted = serde_json::from_value(msg.payload)
                .map_err(|e| ServiceError::Internal(e.to_string()))?;
            if done.run_id == handle.run_id {
                if done.status != RunStatus::Completed {
                    return Err(ServiceError::Internal("calibration run aborted".into()));
                }
                return Ok(handle.run_id);
            }
        }
    }
    .await;
    drop(crane);
    let _ = task.await;
    gen.abort();
    let run_id = outcome?;

    let measured = historian.query_trace(&run_id, TraceKind::Measured, None, None)?;
    let start = std::iter::from_fn(|| started.try_recv())
        .filter_map(|m| serde_json::from_value::<RunStarted>(m.payload).ok())
        .find(|s| s.run_id == run_id)
        .ok_or_else(|| ServiceError::Internal("calibration run start not observed".into()))?;
    let req = SimulationRequest {
        envelope: false,
        ..simulator::run_request(&start, &cfg)
    };
    let (sim, _) = simulator::run_simulation(&req, &cfg)?;
    historian.write_trace(&run_id, &sim)?;

    let unbounded: Vec<(Signal, Metric, f64)> = Thresholds::uniform(f64::INFINITY).checks();
    let values = compare_traces(&measured, &sim, &unbounded, cfg.dtw_band)?;
    let mut thresholds = Thresholds::uniform(0.0);
    for v in &values {
        thresholds.set(v.signal, v.metric, (HEADROOM * v.value).max(threshold_floor(v.signal)));
    }
    Ok(Calibration {
        run_id,
        values,
        thresholds,
    })
}
