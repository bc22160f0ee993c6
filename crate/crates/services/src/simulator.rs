//! Simulation service: nominal-model traces and confidence envelopes.

use std::sync::Arc;

use crane_twin_bus::{topics, BusClient};
use crane_twin_core::{confidence_envelope, simulate_with, SimOptions, Trace};
use crane_twin_historian::Historian;
use tokio::task::JoinHandle;

use crate::config::{SharedConfig, TwinConfig};
use crate::error::{Result, ServiceError};
use crate::payloads::{new_id, RunStarted, SimulationRequest, SimulationResult};

/// Reference simulation of a started run. The nominal model has no wind
/// forecast, so the run is simulated under the mean of the wind model
/// rather than holding the first wind reading for the whole run.
pub fn run_request(run: &RunStarted, cfg: &TwinConfig) -> SimulationRequest {
    let mut initial = run.initial;
    initial.wind = cfg.wind.mean;
    SimulationRequest {
        request_id: new_id(),
        run_id: Some(run.run_id.clone()),
        trajectory: run.trajectory.clone(),
        initial,
        sample_period: Some(run.sample_period),
        envelope: true,
    }
}

/// Simulated trace and, when requested, the envelope pair.
pub fn run_simulation(
    req: &SimulationRequest,
    cfg: &TwinConfig,
) -> Result<(Trace, Option<(Trace, Trace)>)> {
    req.trajectory.validate()?;
    let period = req.sample_period.unwrap_or(cfg.sensors.sample_period);
    if !(period > 0.0 && period.is_finite()) {
        return Err(ServiceError::BadRequest(format!("sample period must be positive, got {period}")));
    }
    let opts = SimOptions::sampled(cfg.plant_dt, period);
    let id = req.run_id.clone().unwrap_or_else(|| req.request_id.clone());
    let mut sim = simulate_with(&req.trajectory, &cfg.params, &req.initial, opts)?;
    sim.id = id.clone();
    let envelope = if req.envelope {
        let (mut lo, mut hi) =
            confidence_envelope(&req.trajectory, &cfg.params, &req.initial, opts, &cfg.envelope)?;
        lo.id = id.clone();
        hi.id = id;
        Some((lo, hi))
    } else {
        None
    };
    Ok((sim, envelope))
}

/// Serves one request: run simulations are stored with the run, others are
/// returned in the result.
pub fn serve(req: &SimulationRequest, cfg: &TwinConfig, historian: &Historian) -> SimulationResult {
    let mut result = SimulationResult {
        request_id: req.request_id.clone(),
        run_id: req.run_id.clone(),
        error: None,
        samples: 0,
        simulated: None,
        envelope_lower: None,
        envelope_upper: None,
    };
    let outcome = run_simulation(req, cfg).and_then(|(sim, env)| {
        result.samples = sim.samples.len();
        match &req.run_id {
            Some(run_id) => {
                historian.write_trace(run_id, &sim)?;
                if let Some((lo, hi)) = &env {
                    historian.write_trace(run_id, lo)?;
                    historian.write_trace(run_id, hi)?;
                }
            }
            None => {
                result.simulated = Some(sim);
                if let Some((lo, hi)) = env {
                    result.envelope_lower = Some(lo);
                    result.envelope_upper = Some(hi);
                }
            }
        }
        Ok(())
    });
    if let Err(e) = outcome {
        result.error = Some(e.to_string());
    }
    result
}

/// Simulates every started run and every explicit request.
pub async fn spawn(
    bus: BusClient,
    config: SharedConfig,
    historian: Arc<Historian>,
) -> Result<JoinHandle<()>> {
    let mut started = bus.subscribe(topics::RUN_STARTED).await?;
    let mut requests = bus.subscribe(topics::SIMULATION_REQUEST).await?;
    Ok(tokio::spawn(async move {
        loop {
            let req = tokio::select! {
                msg = started.recv() => {
                    let Some(msg) = msg else { break };
                    match serde_json::from_value::<RunStarted>(msg.payload) {
                        Ok(run) => run_request(&run, &config.read().unwrap()),
                        Err(e) => {
                            tracing::warn!("malformed run start: {e}");
                            continue;
                        }
                    }
                }
                msg = requests.recv() => {
                    let Some(msg) = msg else { break };
                    match serde_json::from_value::<SimulationRequest>(msg.payload) {
                        Ok(r) => r,
                        Err(e) => {
                            tracing::warn!("malformed simulation request: {e}");
                            continue;
                        }
                    }
                }
            };
            let cfg = config.read().unwrap().clone();
            let historian = historian.clone();
            let bus = bus.clone();
            tokio::task::spawn_blocking(move || {
                let result = serve(&req, &cfg, &historian);
                if let Some(e) = &result.error {
                    tracing::warn!("simulation {} failed: {e}", result.request_id);
                }
                if let Err(e) = bus.publish_json(topics::SIMULATION_RESULT, &result) {
                    tracing::warn!("cannot publish simulation result: {e}");
                }
            });
        }
    }))
}
