#![allow(dead_code)]

use std::time::Duration;

use crane_twin::{GatewayOptions, Twin, UpOptions};
use crane_twin_services::TwinConfig;
use futures::StreamExt;
use serde_json::Value;
use tokio::sync::mpsc;

pub struct Fixture {
    pub twin: Twin,
    pub url: String,
    pub http: reqwest::Client,
    pub dir: tempfile::TempDir,
}

/// As-fast-as-possible stack on ephemeral ports in a fresh data directory.
pub fn config(dir: &tempfile::TempDir) -> TwinConfig {
    TwinConfig {
        time_scale: 0.0,
        data_dir: dir.path().join("data"),
        gateway_addr: "127.0.0.1:0".into(),
        broker_addr: "127.0.0.1:0".into(),
        ..TwinConfig::default()
    }
}

pub async fn start_with(edit: impl FnOnce(&mut TwinConfig, &mut UpOptions)) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&dir);
    let mut opts = UpOptions {
        gateway: GatewayOptions {
            heartbeat: Duration::from_millis(200),
            ..GatewayOptions::default()
        },
        ..UpOptions::default()
    };
    edit(&mut cfg, &mut opts);
    let twin = Twin::up(cfg, opts).await.unwrap();
    let url = twin.gateway_url();
    Fixture {
        twin,
        url,
        http: reqwest::Client::new(),
        dir,
    }
}

pub async fn start() -> Fixture {
    start_with(|_, _| {}).await
}

impl Fixture {
    pub async fn get(&self, path: &str) -> (u16, Value) {
        let resp = self.http.get(format!("{}{path}", self.url)).send().await.unwrap();
        decode(resp).await
    }

    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let resp = self
            .http
            .post(format!("{}{path}", self.url))
            .json(&body)
            .send()
            .await
            .unwrap();
        decode(resp).await
    }

    pub async fn put(&self, path: &str, body: Value) -> (u16, Value) {
        let resp = self
            .http
            .put(format!("{}{path}", self.url))
            .json(&body)
            .send()
            .await
            .unwrap();
        decode(resp).await
    }

    pub async fn ok(&self, method: &str, path: &str, body: Value) -> Value {
        let (status, v) = match method {
            "GET" => self.get(path).await,
            "PUT" => self.put(path, body).await,
            _ => self.post(path, body).await,
        };
        assert_eq!(status, 200, "{method} {path}: {v}");
        v
    }

    /// Homes and zeroes the crane.
    pub async fn ready(&self) {
        self.ok("POST", "/api/home", Value::Null).await;
        self.ok("POST", "/api/zero", Value::Null).await;
    }

    /// Waits until the run has a validation report and returns it.
    pub async fn report(&self, run_id: &str) -> Value {
        for _ in 0..1200 {
            let (status, v) = self.get(&format!("/api/runs/{run_id}/validation")).await;
            if status == 200 {
                return v;
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
        panic!("no report for {run_id}");
    }

    pub async fn stream(&self) -> EventStream {
        EventStream::open(&format!("{}/api/stream", self.url)).await
    }
}

async fn decode(resp: reqwest::Response) -> (u16, Value) {
    let status = resp.status().as_u16();
    let text = resp.text().await.unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

#[derive(Debug, Clone)]
pub struct SseEvent {
    pub event: String,
    pub data: String,
}

impl SseEvent {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.data).unwrap()
    }
}

/// Minimal server-sent events reader.
pub struct EventStream {
    rx: mpsc::UnboundedReceiver<SseEvent>,
    task: tokio::task::JoinHandle<()>,
}

impl EventStream {
    pub async fn open(url: &str) -> EventStream {
        let resp = reqwest::get(url).await.unwrap();
        assert_eq!(resp.status(), 200);
        assert!(resp.headers()["content-type"]
            .to_str()
            .unwrap()
            .starts_with("text/event-stream"));
        let (tx, rx) = mpsc::unbounded_channel();
        let task = tokio::spawn(async move {
            let mut body = resp.bytes_stream();
            let mut buf = String::new();
            while let Some(Ok(chunk)) = body.next().await {
                buf.push_str(&String::from_utf8_lossy(&chunk));
                while let Some(end) = buf.find("\n\n") {
                    let block: String = buf.drain(..end + 2).collect();
                    let mut ev = SseEvent {
                        event: "message".into(),
                        data: String::new(),
                    };
                    for line in block.lines() {
                        if let Some(v) = line.strip_prefix("event:") {
                            ev.event = v.trim().to_string();
                        } else if let Some(v) = line.strip_prefix("data:") {
                            if !ev.data.is_empty() {
                                ev.data.push('\n');
                            }
                            ev.data.push_str(v.strip_prefix(' ').unwrap_or(v));
                        }
                    }
                    if tx.send(ev).is_err() {
                        return;
                    }
                }
            }
        });
        EventStream { rx, task }
    }

    pub async fn next(&mut self, timeout: Duration) -> Option<SseEvent> {
        tokio::time::timeout(timeout, self.rx.recv()).await.ok().flatten()
    }

    /// Everything received within `window`.
    pub async fn collect_for(&mut self, window: Duration) -> Vec<SseEvent> {
        let deadline = tokio::time::Instant::now() + window;
        let mut out = Vec::new();
        while let Ok(Some(ev)) = tokio::time::timeout_at(deadline, self.rx.recv()).await {
            out.push(ev);
        }
        out
    }

    /// Collects events until one satisfies `stop`, which is included.
    pub async fn until(
        &mut self,
        timeout: Duration,
        mut stop: impl FnMut(&SseEvent) -> bool,
    ) -> Vec<SseEvent> {
        let deadline = tokio::time::Instant::now() + timeout;
        let mut out = Vec::new();
        loop {
            let ev = tokio::time::timeout_at(deadline, self.rx.recv())
                .await
                .expect("stream timed out")
                .expect("stream closed");
            let done = stop(&ev);
            out.push(ev);
            if done {
                return out;
            }
        }
    }
}

impl Drop for EventStream {
    fn drop(&mut self) {
        self.task.abort();
    }
}
