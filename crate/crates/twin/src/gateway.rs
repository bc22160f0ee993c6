//! HTTP API and server-sent event stream in front of a running stack.
//!
//! Every crane command goes through the virtual crane's command queue, so
//! concurrent requests are serialized there. The stream fans out through a
//! broadcast channel: each client has its own bounded buffer, and a client
//! that falls behind loses its oldest pending events rather than stalling
//! the others.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::response::sse::{Event, Sse};
use axum::routing::{any, get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use crane_twin_bus::topics;
use crane_twin_core::{CraneState, Trace, TraceKind, Trajectory};
use crane_twin_historian::{Historian, RunRecord, ValidationReport};
use crane_twin_services::{
    FaultSpec, RunHandle, ServiceError, Stack, StatusSnapshot, TwinConfig,
};
use futures::Stream;
use serde::Deserialize;
use serde_json::Value;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, oneshot};
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;

use crate::api::{ApiError, HoistRequest, MagnetRequest, MoveRequest, RunDetail};

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub heartbeat: Duration,
    /// Events buffered per stream client before the oldest are dropped.
    pub stream_buffer: usize,
    /// Static files served under `/`, typically the HMI bundle.
    pub static_dir: Option<PathBuf>,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        GatewayOptions {
            heartbeat: Duration::from_secs(5),
            stream_buffer: 1024,
            static_dir: None,
        }
    }
}

/// One event of `/api/stream`: an SSE event name and its JSON data.
#[derive(Debug, Clone)]
pub struct StreamEvent {
    pub kind: &'static str,
    pub data: String,
}

/// Bus topics forwarded to the stream and the event names they get.
pub const STREAM_TOPICS: [(&str, &str); 5] = [
    (topics::CRANE_STATE, "state"),
    (topics::VALIDATION_ALERT, "alert"),
    (topics::VALIDATION_REPORT, "report"),
    (topics::RUN_STARTED, "run_started"),
    (topics::RUN_COMPLETED, "run_completed"),
];

#[derive(Clone)]
struct AppState {
    stack: Arc<Stack>,
    events: broadcast::Sender<StreamEvent>,
    heartbeat: Duration,
}

impl AppState {
    fn historian(&self) -> Arc<Historian> {
        self.stack.historian().clone()
    }
}

/// Runs a blocking historian or validation call off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::from(ServiceError::Internal(e.to_string())))?
}

pub struct Gateway {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    server: JoinHandle<()>,
    pump: JoinHandle<()>,
}

impl Gateway {
    /// Binds `addr`; the error names the port when it is taken.
    pub async fn bind(addr: SocketAddr) -> Result<TcpListener, ServiceError> {
        TcpListener::bind(addr).await.map_err(|e| {
            ServiceError::Internal(format!("gateway cannot listen on port {}: {e}", addr.port()))
        })
    }

    /// Serves the API for `stack` on an already bound listener.
    pub async fn serve(
        listener: TcpListener,
        stack: Arc<Stack>,
        opts: GatewayOptions,
    ) -> Result<Gateway, ServiceError> {
        let addr = listener
            .local_addr()
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        let (events, _) = broadcast::channel(opts.stream_buffer.max(1));
        let pump = spawn_pump(&stack, events.clone()).await?;
        let app = router(
            AppState {
                stack,
                events,
                heartbeat: opts.heartbeat,
            },
            opts.static_dir,
        );
        let (tx, rx) = oneshot::channel::<()>();
        let server = tokio::spawn(async move {
            let served = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
            if let Err(e) = served {
                tracing::error!("gateway stopped: {e}");
            }
        });
        Ok(Gateway {
            addr,
            shutdown: Some(tx),
            server,
            pump,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting requests and waits for open ones to finish. Open
    /// event streams are cut.
    pub async fn shutdown(mut self) {
        self.pump.abort();
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = tokio::time::timeout(Duration::from_secs(5), &mut self.server).await;
        self.server.abort();
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        self.pump.abort();
        self.server.abort();
    }
}

/// Forwards stream topics from the bus into the broadcast channel.
async fn spawn_pump(
    stack: &Stack,
    events: broadcast::Sender<StreamEvent>,
) -> Result<JoinHandle<()>, ServiceError> {
    let bus = stack.bus();
    let mut subs = Vec::new();
    for (topic, kind) in STREAM_TOPICS {
        subs.push((bus.subscribe(topic).await?, kind));
    }
    Ok(tokio::spawn(async move {
        let (tx, mut rx) = tokio::sync::mpsc::unbounded_channel();
        for (mut sub, kind) in subs {
            let tx = tx.clone();
            tokio::spawn(async move {
                while let Some(msg) = sub.recv().await {
                    if tx.send(StreamEvent { kind, data: msg.payload.to_string() }).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);
        while let Some(ev) = rx.recv().await {
            // No receivers is fine: nobody is watching.
            let _ = events.send(ev);
        }
    }))
}

fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/status", get(status))
        .route("/api/move", post(move_to))
        .route("/api/hoist", post(hoist))
        .route("/api/home", post(home))
        .route("/api/zero", post(zero))
        .route("/api/magnet", post(magnet))
        .route("/api/faults", post(faults))
        .route("/api/runs", get(list_runs))
        .route("/api/runs/{id}", get(show_run))
        .route("/api/runs/{id}/trace", get(trace))
        .route("/api/runs/{id}/trajectory", get(trajectory))
        .route("/api/runs/{id}/validation", get(validation))
        .route("/api/runs/{id}/validate", post(validate))
        .route("/api/config", get(get_config).put(put_config))
        .route("/api/live", get(live))
        .route("/api/stream", get(stream))
        .route("/api/{*rest}", any(unknown_endpoint))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(no_static),
    }
}

async fn unknown_endpoint() -> ApiError {
    ApiError::not_found("no such endpoint")
}

async fn no_static() -> ApiError {
    ApiError::not_found("no HMI bundle is served here; the API is under /api")
}

async fn status(State(app): State<AppState>) -> Json<StatusSnapshot> {
    Json(app.stack.crane().status())
}

async fn move_to(
    State(app): State<AppState>,
    body: Result<Json<MoveRequest>, JsonRejection>,
) -> ApiResult<RunHandle> {
    let Json(req) = body?;
    Ok(Json(app.stack.crane().move_to(req.target_x, req.mode).await?))
}

async fn hoist(
    State(app): State<AppState>,
    body: Result<Json<HoistRequest>, JsonRejection>,
) -> ApiResult<RunHandle> {
    let Json(req) = body?;
    Ok(Json(app.stack.crane().hoist_to(req.target_l).await?))
}

/// Returns once homing has finished.
async fn home(State(app): State<AppState>) -> ApiResult<StatusSnapshot> {
    app.stack.crane().home().await?;
    Ok(Json(app.stack.crane().status()))
}

async fn zero(State(app): State<AppState>) -> ApiResult<StatusSnapshot> {
    app.stack.crane().zero().await?;
    Ok(Json(app.stack.crane().status()))
}

async fn magnet(
    State(app): State<AppState>,
    body: Result<Json<MagnetRequest>, JsonRejection>,
) -> ApiResult<StatusSnapshot> {
    let Json(req) = body?;
    app.stack.crane().set_magnet(req.on).await?;
    Ok(Json(app.stack.crane().status()))
}

/// A posted fault is active unless the body says `"active": false`, which
/// clears it.
async fn faults(
    State(app): State<AppState>,
    body: Result<Json<Value>, JsonRejection>,
) -> ApiResult<StatusSnapshot> {
    let Json(mut body) = body?;
    let Some(obj) = body.as_object_mut() else {
        return Err(ApiError::bad_request("fault must be an object"));
    };
    obj.entry("active").or_insert(Value::Bool(true));
    let spec: FaultSpec =
        serde_json::from_value(body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let spec = if spec.active { spec } else { FaultSpec::default() };
    app.stack.crane().inject_fault(spec).await?;
    Ok(Json(app.stack.crane().status()))
}

async fn list_runs(State(app): State<AppState>) -> ApiResult<Vec<RunRecord>> {
    let h = app.historian();
    Ok(Json(blocking(move || Ok(h.list_runs()?)).await?))
}

async fn show_run(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<RunDetail> {
    let h = app.historian();
    let detail = blocking(move || {
        let run = h.get_run(&id)?;
        let traces = TraceKind::ALL
            .into_iter()
            .filter(|k| h.has_trace(&id, *k))
            .collect();
        Ok(RunDetail {
            run,
            trajectory: h.query_trajectory(&id).ok(),
            report: h.query_report(&id).ok(),
            traces,
        })
    })
    .await?;
    Ok(Json(detail))
}

#[derive(Debug, Deserialize)]
struct TraceQuery {
    kind: Option<String>,
    from: Option<f64>,
    to: Option<f64>,
}

fn parse_kind(kind: Option<&str>) -> Result<TraceKind, ApiError> {
    match kind {
        None => Ok(TraceKind::Measured),
        Some(k) => TraceKind::parse(k).ok_or_else(|| {
            ApiError::bad_request(format!(
                "unknown trace kind {k:?}; expected measured, simulated, envelope_lower or envelope_upper"
            ))
        }),
    }
}

async fn trace(
    State(app): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<TraceQuery>, QueryRejection>,
) -> ApiResult<Trace> {
    let Query(q) = query?;
    let kind = parse_kind(q.kind.as_deref())?;
    let h = app.historian();
    Ok(Json(blocking(move || Ok(h.query_trace(&id, kind, q.from, q.to)?)).await?))
}

async fn trajectory(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Trajectory> {
    let h = app.historian();
    Ok(Json(blocking(move || Ok(h.query_trajectory(&id)?)).await?))
}

async fn validation(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<ValidationReport> {
    let h = app.historian();
    Ok(Json(blocking(move || Ok(h.query_report(&id)?)).await?))
}

/// Re-runs validation of a stored run under the current thresholds.
async fn validate(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<ValidationReport> {
    let v = app.stack.validator().clone();
    Ok(Json(blocking(move || Ok(v.validate_run(&id)?)).await?))
}

async fn get_config(State(app): State<AppState>) -> Json<TwinConfig> {
    Json(app.stack.config())
}

/// Applies a JSON merge patch; nothing changes unless all of it is valid.
async fn put_config(
    State(app): State<AppState>,
    body: Result<Json<Value>, JsonRejection>,
) -> ApiResult<TwinConfig> {
    let Json(patch) = body?;
    let stack = app.stack.clone();
    Ok(Json(blocking(move || Ok(stack.update_config(&patch)?)).await?))
}

#[derive(Debug, Deserialize)]
struct LiveQuery {
    date: Option<NaiveDate>,
    from: Option<f64>,
    to: Option<f64>,
}

/// Idle telemetry of one day, today by default.
async fn live(
    State(app): State<AppState>,
    query: Result<Query<LiveQuery>, QueryRejection>,
) -> ApiResult<Vec<CraneState>> {
    let Query(q) = query?;
    let date = q.date.unwrap_or_else(|| chrono::Utc::now().date_naive());
    let h = app.historian();
    Ok(Json(blocking(move || Ok(h.query_live(date, q.from, q.to)?)).await?))
}

async fn stream(State(app): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = app.events.subscribe();
    let period = app.heartbeat;
    let tick = tokio::time::interval_at(tokio::time::Instant::now() + period, period);
    let events = futures::stream::unfold((rx, tick), |(mut rx, mut tick)| async move {
        loop {
            tokio::select! {
                ev = rx.recv() => match ev {
                    Ok(ev) => {
                        let event = Event::default().event(ev.kind).data(ev.data);
                        return Some((Ok(event), (rx, tick)));
                    }
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        tracing::debug!("stream client lagged, dropped {n} events");
                    }
                    Err(broadcast::error::RecvError::Closed) => return None,
                },
                _ = tick.tick() => {
                    let data = serde_json::json!({ "time": chrono::Utc::now() }).to_string();
                    let event = Event::default().event("heartbeat").data(data);
                    return Some((Ok(event), (rx, tick)));
                }
            }
        }
    });
    Sse::new(events)
}
