#![allow(dead_code)]

use std::time::Duration;

use crane_twin_bus::{topics, Subscription};
use crane_twin_services::{RunCompleted, Stack, StackOptions, TwinConfig};
use serde::de::DeserializeOwned;

pub struct Fixture {
    pub stack: Stack,
    pub dir: tempfile::TempDir,
}

pub fn config(dir: &tempfile::TempDir) -> TwinConfig {
    TwinConfig {
        time_scale: 0.0,
        data_dir: dir.path().to_path_buf(),
        ..TwinConfig::default()
    }
}

pub async fn start_with(edit: impl FnOnce(&mut TwinConfig)) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&dir);
    edit(&mut cfg);
    let stack = Stack::start(cfg, StackOptions::default()).await.unwrap();
    Fixture { stack, dir }
}

pub async fn start() -> Fixture {
    start_with(|_| {}).await
}

/// Next message on `sub` decoded as `T`, failing the test after `secs`.
pub async fn next<T: DeserializeOwned>(sub: &mut Subscription, secs: u64) -> T {
    let msg = tokio::time::timeout(Duration::from_secs(secs), sub.recv())
        .await
        .expect("timed out waiting for a bus message")
        .expect("bus closed");
    serde_json::from_value(msg.payload).unwrap()
}

/// Waits for the completion event of `run_id`.
pub async fn completion(sub: &mut Subscription, run_id: &str) -> RunCompleted {
    loop {
        let done: RunCompleted = next(sub, 60).await;
        if done.run_id == run_id {
            return done;
        }
    }
}

pub async fn subscribe(f: &Fixture, topic: &str) -> Subscription {
    f.stack.bus().subscribe(topic).await.unwrap()
}

pub async fn completions(f: &Fixture) -> Subscription {
    subscribe(f, topics::RUN_COMPLETED).await
}

pub async fn home_and_zero(f: &Fixture) {
    f.stack.crane().home().await.unwrap();
    f.stack.crane().zero().await.unwrap();
}
