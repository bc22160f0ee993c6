//! Blocking HTTP client for the gateway API.

use std::time::{Duration, Instant};

use crane_twin_core::{ProfileMode, Trace, TraceKind};
use crane_twin_historian::{RunRecord, RunStatus, ValidationReport};
use crane_twin_services::{FaultSpec, RunHandle, StatusSnapshot, TwinConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::api::{ApiError, ErrorCode, HoistRequest, MoveRequest, RunDetail};

#[derive(Debug)]
pub enum ClientError {
    /// The gateway could not be reached or sent something unreadable.
    Transport(String),
    Api(ApiError),
    /// Anything that failed locally, such as startup or writing files.
    Local(String),
}

impl std::fmt::Display for ClientError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClientError::Transport(m) => write!(f, "transport error: {m}"),
            ClientError::Api(e) => write!(f, "{e}"),
            ClientError::Local(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for ClientError {}

impl ClientError {
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            ClientError::Api(e) => Some(e.code),
            ClientError::Transport(_) | ClientError::Local(_) => None,
        }
    }
}

impl From<reqwest::Error> for ClientError {
    fn from(e: reqwest::Error) -> Self {
        ClientError::Transport(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

pub struct Client {
    base: String,
    http: reqwest::blocking::Client,
}

impl Client {
    /// `addr` is `host:port` or a full `http://` URL.
    pub fn new(addr: &str) -> Result<Self> {
        let base = if addr.starts_with("http://") || addr.starts_with("https://") {
            addr.trim_end_matches('/').to_string()
        } else {
            format!("http://{addr}")
        };
        // Homing and validation can take a while in real time.
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(600))
            .build()?;
        Ok(Client { base, http })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn send<T: DeserializeOwned>(&self, req: reqwest::blocking::RequestBuilder) -> Result<T> {
        let resp = req.send()?;
        let status = resp.status();
        let body = resp.text()?;
        if status.is_success() {
            serde_json::from_str(&body).map_err(|e| ClientError::Transport(format!("bad response: {e}")))
        } else {
            match serde_json::from_str::<ApiError>(&body) {
                Ok(e) => Err(ClientError::Api(e)),
                Err(_) => Err(ClientError::Transport(format!("HTTP {status}: {body}"))),
            }
        }
    }

    pub fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        self.send(self.http.get(format!("{}{path}", self.base)))
    }

    pub fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        self.send(self.http.post(format!("{}{path}", self.base)).json(body))
    }

    pub fn put<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        self.send(self.http.put(format!("{}{path}", self.base)).json(body))
    }

    pub fn status(&self) -> Result<StatusSnapshot> {
        self.get("/api/status")
    }

    pub fn move_to(&self, target_x: f64, mode: ProfileMode) -> Result<RunHandle> {
        self.post("/api/move", &MoveRequest { target_x, mode })
    }

    pub fn hoist_to(&self, target_l: f64) -> Result<RunHandle> {
        self.post("/api/hoist", &HoistRequest { target_l })
    }

    pub fn home(&self) -> Result<StatusSnapshot> {
        self.post("/api/home", &json!({}))
    }

    pub fn zero(&self) -> Result<StatusSnapshot> {
        self.post("/api/zero", &json!({}))
    }

    pub fn magnet(&self, on: bool) -> Result<StatusSnapshot> {
        self.post("/api/magnet", &json!({ "on": on }))
    }

    pub fn fault(&self, spec: &FaultSpec) -> Result<StatusSnapshot> {
        self.post("/api/faults", spec)
    }

    pub fn runs(&self) -> Result<Vec<RunRecord>> {
        self.get("/api/runs")
    }

    pub fn run(&self, id: &str) -> Result<RunDetail> {
        self.get(&format!("/api/runs/{id}"))
    }

    pub fn trace(&self, id: &str, kind: TraceKind) -> Result<Trace> {
        self.get(&format!("/api/runs/{id}/trace?kind={}", kind.as_str()))
    }

    pub fn report(&self, id: &str) -> Result<ValidationReport> {
        self.get(&format!("/api/runs/{id}/validation"))
    }

    pub fn validate(&self, id: &str) -> Result<ValidationReport> {
        self.post(&format!("/api/runs/{id}/validate"), &json!({}))
    }

    pub fn config(&self) -> Result<TwinConfig> {
        self.get("/api/config")
    }

    pub fn update_config(&self, patch: &Value) -> Result<TwinConfig> {
        self.put("/api/config", patch)
    }

    /// Polls until the run has finished and its validation report exists.
    /// An aborted run is a state error.
    pub fn wait_for_report(&self, id: &str, timeout: Duration) -> Result<ValidationReport> {
        let deadline = Instant::now() + timeout;
        let poll = Duration::from_millis(50);
        loop {
            let detail = self.run(id)?;
            match (detail.run.status, detail.report) {
                (RunStatus::Aborted, _) => {
                    return Err(ClientError::Api(ApiError::new(
                        ErrorCode::StateError,
                        format!("run {id} was aborted"),
                    )))
                }
                (RunStatus::Completed, Some(report)) => return Ok(report),
                _ => {}
            }
            if Instant::now() >= deadline {
                return Err(ClientError::Transport(format!(
                    "no validation report for run {id} within {}s",
                    timeout.as_secs()
                )));
            }
            std::thread::sleep(poll);
        }
    }
}
