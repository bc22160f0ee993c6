//! Trajectory generator service.

use std::time::Duration;

use crane_twin_bus::{topics, BusClient, Subscription};
use crane_twin_core::{plan_trapezoid, plan_zv_shaped, Axis, CraneParameters, ProfileMode, Trajectory};
use tokio::task::JoinHandle;

use crate::config::SharedConfig;
use crate::error::{Result, ServiceError};
use crate::payloads::{TrajectoryRequest, TrajectoryResult};

/// Plans the profile described by `req`. Hoist moves are always plain
/// trapezoids.
pub fn plan(req: &TrajectoryRequest, params: &CraneParameters) -> Result<Trajectory> {
    let (v_lim, a_lim) = match req.axis {
        Axis::Cart => (params.cart_v_max, params.cart_a_max),
        Axis::Hoist => (params.hoist_v_max, params.hoist_a_max),
    };
    let v_max = req.v_max.unwrap_or(v_lim);
    let a_max = req.a_max.unwrap_or(a_lim);
    if v_max > v_lim + 1e-12 || a_max > a_lim + 1e-12 {
        return Err(ServiceError::BadRequest(format!(
            "requested rates exceed the axis limits ({v_lim} m/s, {a_lim} m/s²)"
        )));
    }
    let traj = match (req.axis, req.mode) {
        (Axis::Cart, ProfileMode::ZvShaped) => {
            let l = req.rope_length.ok_or_else(|| {
                ServiceError::BadRequest("shaped profiles need a rope length".into())
            })?;
            plan_zv_shaped(
                req.p0,
                req.p1,
                v_max,
                a_max,
                l,
                req.damping_ratio.unwrap_or(0.0),
                req.dt,
                params,
            )?
        }
        _ => plan_trapezoid(req.p0, req.p1, v_max, a_max, req.dt)?,
    };
    Ok(traj.with_axis(req.axis))
}

/// Answers every request on `dt/trajectory/request` with a result carrying
/// the same request id.
pub async fn spawn(bus: BusClient, config: SharedConfig) -> Result<JoinHandle<()>> {
    let mut requests = bus.subscribe(topics::TRAJECTORY_REQUEST).await?;
    Ok(tokio::spawn(async move {
        while let Some(msg) = requests.recv().await {
            let req: TrajectoryRequest = match serde_json::from_value(msg.payload) {
                Ok(r) => r,
                Err(e) => {
                    tracing::warn!("malformed trajectory request: {e}");
                    continue;
                }
            };
            let params = config.read().unwrap().params;
            let result = match plan(&req, &params) {
                Ok(t) => TrajectoryResult {
                    request_id: req.request_id,
                    trajectory: Some(t),
                    error: None,
                },
                Err(e) => TrajectoryResult {
                    request_id: req.request_id,
                    trajectory: None,
                    error: Some(e.to_string()),
                },
            };
            if let Err(e) = bus.publish_json(topics::TRAJECTORY_RESULT, &result) {
                tracing::warn!("cannot publish trajectory result: {e}");
            }
        }
    }))
}

/// Request/response access to the generator over the bus.
pub struct TrajectoryClient {
    bus: BusClient,
    results: Subscription,
}

impl TrajectoryClient {
    pub async fn new(bus: BusClient) -> Result<Self> {
        let results = bus.subscribe(topics::TRAJECTORY_RESULT).await?;
        Ok(TrajectoryClient { bus, results })
    }

    pub async fn request(&mut self, req: TrajectoryRequest, timeout: Duration) -> Result<Trajectory> {
        while self.results.try_recv().is_some() {}
        let id = req.request_id.clone();
        self.bus.publish_json(topics::TRAJECTORY_REQUEST, &req)?;
        let wait = async {
            while let Some(msg) = self.results.recv().await {
                let Ok(res) = serde_json::from_value::<TrajectoryResult>(msg.payload) else {
                    continue;
                };
                if res.request_id != id {
                    continue;
                }
                return match (res.trajectory, res.error) {
                    (Some(t), _) => {
                        t.validate()?;
                        Ok(t)
                    }
                    (None, e) => Err(ServiceError::BadRequest(
                        e.unwrap_or_else(|| "trajectory generator returned nothing".into()),
                    )),
                };
            }
            Err(ServiceError::Internal("bus connection closed".into()))
        };
        tokio::time::timeout(timeout, wait)
            .await
            .map_err(|_| ServiceError::Internal("trajectory generator did not answer".into()))?
    }
}
