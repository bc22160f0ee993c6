mod common;

use std::time::Duration;

use common::*;
use serde_json::{json, Value};

fn code(v: &Value) -> &str {
    v["code"].as_str().unwrap_or_else(|| panic!("no error code in {v}"))
}

#[tokio::test(flavor = "multi_thread")]
async fn fresh_stack_reads() {
    let f = start().await;
    assert_eq!(f.ok("GET", "/api/runs", Value::Null).await, json!([]));
    let status = f.ok("GET", "/api/status", Value::Null).await;
    assert_eq!(status["homed"], false);
    assert_eq!(status["busy"], false);
    let keys: Vec<_> = status["state"].as_object().unwrap().keys().cloned().collect();
    for k in ["t", "x", "v", "l", "l_dot", "theta", "theta_dot", "wind", "magnet_on"] {
        assert!(keys.iter().any(|x| x == k), "{k} missing from {keys:?}");
    }
    let cfg = f.ok("GET", "/api/config", Value::Null).await;
    assert!(cfg["thresholds"]["theta"]["rmse"].as_f64().unwrap() > 0.0);
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_runs_and_endpoints_are_404() {
    let f = start().await;
    for path in [
        "/api/runs/nope",
        "/api/runs/nope/trace?kind=measured",
        "/api/runs/nope/trajectory",
        "/api/runs/nope/validation",
        "/api/nothing/here",
    ] {
        let (status, body) = f.get(path).await;
        assert_eq!(status, 404, "{path}");
        assert_eq!(code(&body), "not_found");
    }
    let (status, body) = f.post("/api/runs/nope/validate", json!({})).await;
    assert_eq!(status, 404);
    assert_eq!(code(&body), "not_found");
    let (status, _) = f.get("/").await;
    assert_eq!(status, 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn command_errors_map_to_status_codes() {
    let f = start().await;
    let (status, body) = f.post("/api/move", json!({ "target_x": 0.5, "mode": "zv" })).await;
    assert_eq!((status, code(&body)), (409, "state_error"));

    let status = f.ok("POST", "/api/home", Value::Null).await;
    assert_eq!(status["homed"], true);
    assert_eq!(f.ok("GET", "/api/status", Value::Null).await["homed"], true);

    let (status, body) = f.post("/api/move", json!({ "target_x": -1.0 })).await;
    assert_eq!((status, code(&body)), (400, "bad_request"));
    let (status, body) = f.post("/api/hoist", json!({ "target_l": 5.0 })).await;
    assert_eq!((status, code(&body)), (400, "bad_request"));
    let (status, body) = f.post("/api/move", json!({ "target": 0.5 })).await;
    assert_eq!((status, code(&body)), (400, "bad_request"));
    let (status, body) = f.post("/api/move", json!({ "target_x": 0.5, "mode": "bang" })).await;
    assert_eq!((status, code(&body)), (400, "bad_request"));
    let resp = f
        .http
        .post(format!("{}/api/move", f.url))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(code(&body), "bad_request");

    let (status, body) = f.post("/api/faults", json!({ "damping_scale": 0.0 })).await;
    assert_eq!((status, code(&body)), (400, "bad_request"));
    assert_eq!(f.ok("GET", "/api/runs", Value::Null).await, json!([]));
}

#[tokio::test(flavor = "multi_thread")]
async fn magnet_and_faults() {
    let f = start().await;
    let s = f.ok("POST", "/api/magnet", json!({ "on": true })).await;
    assert_eq!(s["state"]["magnet_on"], true);
    let s = f.ok("POST", "/api/faults", json!({ "damping_scale": 1.5 })).await;
    assert_eq!(s["fault_active"], true);
    assert_eq!(s["fault"]["damping_scale"], 1.5);
    let s = f.ok("POST", "/api/faults", json!({ "active": false })).await;
    assert_eq!(s["fault_active"], false);
    assert_eq!(s["fault"]["damping_scale"], 1.0);
    let s = f.ok("POST", "/api/magnet", json!({ "on": false })).await;
    assert_eq!(s["state"]["magnet_on"], false);
}

#[tokio::test(flavor = "multi_thread")]
async fn move_during_move_conflicts_without_side_effects() {
    let f = start_with(|c, _| c.time_scale = 5.0).await;
    f.ready().await;
    let run = f.ok("POST", "/api/move", json!({ "target_x": 0.6, "mode": "zv_shaped" })).await;
    let run_id = run["run_id"].as_str().unwrap().to_string();
    assert_eq!(run["status"], "running");
    for (path, body) in [
        ("/api/move", json!({ "target_x": 0.2 })),
        ("/api/hoist", json!({ "target_l": 0.7 })),
        ("/api/home", json!({})),
    ] {
        let (status, err) = f.post(path, body).await;
        assert_eq!((status, code(&err)), (409, "conflict"), "{path}");
    }
    let report = f.report(&run_id).await;
    assert_eq!(report["overall_pass"], true, "{report}");
    let runs = f.ok("GET", "/api/runs", Value::Null).await;
    assert_eq!(runs.as_array().unwrap().len(), 1);
    assert_eq!(runs[0]["status"], "completed");
}

#[tokio::test(flavor = "multi_thread")]
async fn zero_while_swinging_is_a_state_error() {
    let f = start().await;
    f.ready().await;
    let run = f.ok("POST", "/api/move", json!({ "target_x": 0.9, "mode": "trapezoid" })).await;
    f.report(run["run_id"].as_str().unwrap()).await;
    let (status, body) = f.post("/api/zero", json!({})).await;
    assert_eq!((status, code(&body)), (409, "state_error"));
}

#[tokio::test(flavor = "multi_thread")]
async fn run_data_through_the_api() {
    let f = start().await;
    f.ready().await;
    let run = f.ok("POST", "/api/move", json!({ "target_x": 0.5 })).await;
    let id = run["run_id"].as_str().unwrap();
    let report = f.report(id).await;
    assert_eq!(report["results"].as_array().unwrap().len(), 9);

    let detail = f.ok("GET", &format!("/api/runs/{id}"), Value::Null).await;
    assert_eq!(detail["run"]["run_id"], id);
    assert_eq!(
        detail["traces"],
        json!(["measured", "simulated", "envelope_lower", "envelope_upper"])
    );
    assert_eq!(detail["report"], report);
    assert_eq!(detail["trajectory"]["mode"], "zv_shaped");

    let measured = f.ok("GET", &format!("/api/runs/{id}/trace"), Value::Null).await;
    assert_eq!(measured["kind"], "measured");
    let n = measured["samples"].as_array().unwrap().len();
    assert!(n > 100);

    let lo = f.ok("GET", &format!("/api/runs/{id}/trace?kind=envelope_lower"), Value::Null).await;
    let hi = f.ok("GET", &format!("/api/runs/{id}/trace?kind=envelope_upper"), Value::Null).await;
    let (lo, hi) = (lo["samples"].as_array().unwrap(), hi["samples"].as_array().unwrap());
    assert_eq!(lo.len(), hi.len());
    assert!(!lo.is_empty());
    for (a, b) in lo.iter().zip(hi) {
        for k in ["x", "l", "theta"] {
            assert!(a[k].as_f64().unwrap() <= b[k].as_f64().unwrap());
        }
    }

    let t0 = measured["samples"][0]["t"].as_f64().unwrap();
    let window = f
        .ok(
            "GET",
            &format!("/api/runs/{id}/trace?kind=measured&from={}&to={}", t0 + 1.0, t0 + 2.0),
            Value::Null,
        )
        .await;
    let w = window["samples"].as_array().unwrap();
    assert!((99..=101).contains(&w.len()), "{}", w.len());
    assert!(w.iter().all(|s| {
        let t = s["t"].as_f64().unwrap();
        t >= t0 + 1.0 && t <= t0 + 2.0
    }));

    let (status, body) = f.get(&format!("/api/runs/{id}/trace?kind=bogus")).await;
    assert_eq!((status, code(&body)), (400, "bad_request"));
    let (status, body) = f.get(&format!("/api/runs/{id}/trace?from=2&to=1")).await;
    assert_eq!((status, code(&body)), (400, "bad_request"));
    let (status, body) = f.get(&format!("/api/runs/{id}/trace?from=abc")).await;
    assert_eq!((status, code(&body)), (400, "bad_request"));

    let again = f.ok("POST", &format!("/api/runs/{id}/validate"), Value::Null).await;
    assert_eq!(again["results"], report["results"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn config_updates_are_validated_and_atomic() {
    let f = start().await;
    let before = f.ok("GET", "/api/config", Value::Null).await;
    for bad in [
        json!({ "logger": { "writeout_decimation": 0 } }),
        json!({ "logger": { "writeout_decimation": 10 }, "seed": 1 }),
        json!({ "thresholds": null }),
        json!({ "thresholds": { "x": { "rmse": -1.0 } } }),
        json!({ "dtw_band": "wide" }),
        json!([1, 2]),
    ] {
        let (status, body) = f.put("/api/config", bad.clone()).await;
        assert_eq!((status, code(&body)), (400, "bad_request"), "{bad}");
    }
    assert_eq!(f.ok("GET", "/api/config", Value::Null).await, before);

    let next = f
        .ok(
            "PUT",
            "/api/config",
            json!({ "logger": { "writeout_decimation": 7 }, "thresholds": { "l": { "dtw": 0.5 } } }),
        )
        .await;
    assert_eq!(next["logger"]["writeout_decimation"], 7);
    assert_eq!(next["thresholds"]["l"]["dtw"], 0.5);
    assert_eq!(next["thresholds"]["x"], before["thresholds"]["x"]);
    assert_eq!(f.ok("GET", "/api/config", Value::Null).await, next);
}

#[tokio::test(flavor = "multi_thread")]
async fn stream_carries_every_run_sample() {
    let f = start().await;
    f.ready().await;
    let mut stream = f.stream().await;
    let run = f.ok("POST", "/api/move", json!({ "target_x": 0.5 })).await;
    let id = run["run_id"].as_str().unwrap().to_string();
    let events = stream
        .until(Duration::from_secs(60), |e| e.event == "report")
        .await;

    let states: Vec<_> = events
        .iter()
        .filter(|e| e.event == "state")
        .map(|e| e.json())
        .filter(|s| s["run_id"] == id.as_str())
        .collect();
    let samples = f
        .ok("GET", &format!("/api/runs/{id}/trace"), Value::Null)
        .await["samples"]
        .as_array()
        .unwrap()
        .len();
    // The first measured sample is taken when the run starts; every later
    // one is streamed.
    assert_eq!(states.len(), samples - 1);
    for w in states.windows(2) {
        assert!(w[1]["state"]["t"].as_f64() > w[0]["state"]["t"].as_f64());
    }
    let kinds: Vec<_> = events.iter().map(|e| e.event.as_str()).collect();
    let started = kinds.iter().position(|k| *k == "run_started").unwrap();
    let completed = kinds.iter().position(|k| *k == "run_completed").unwrap();
    assert!(started < completed);
    assert!(!kinds.contains(&"alert"));
}

#[tokio::test(flavor = "multi_thread")]
async fn idle_stream_sends_heartbeats_only() {
    let f = start().await;
    let mut stream = f.stream().await;
    let events = stream.collect_for(Duration::from_millis(1100)).await;
    assert!(events.len() >= 4, "{events:?}");
    assert!(events.iter().all(|e| e.event == "heartbeat"), "{events:?}");
    assert!(events[0].json()["time"].is_string());
}

#[tokio::test(flavor = "multi_thread")]
async fn stream_clients_are_independent() {
    let f = start().await;
    f.ready().await;
    let mut a = f.stream().await;
    let b = f.stream().await;
    drop(b);
    let run = f.ok("POST", "/api/move", json!({ "target_x": 0.2 })).await;
    let events = a.until(Duration::from_secs(60), |e| e.event == "report").await;
    assert!(events.iter().any(|e| e.event == "state"));
    assert_eq!(events.last().unwrap().json()["run_id"], run["run_id"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn live_telemetry_endpoint() {
    let f = start_with(|c, _| c.time_scale = 1.0).await;
    tokio::time::sleep(Duration::from_millis(1500)).await;
    let live = f.ok("GET", "/api/live", Value::Null).await;
    assert!(!live.as_array().unwrap().is_empty());
    let (status, body) = f.get("/api/live?date=yesterday").await;
    assert_eq!((status, code(&body)), (400, "bad_request"));
}

#[tokio::test(flavor = "multi_thread")]
async fn static_bundle_is_served_unless_headless() {
    let hmi = tempfile::tempdir().unwrap();
    std::fs::write(hmi.path().join("index.html"), "<title>crane</title>").unwrap();
    let path = hmi.path().to_path_buf();
    let f = start_with(|c, _| c.hmi_dir = Some(path.clone())).await;
    let (status, body) = f.get("/").await;
    assert_eq!(status, 200);
    assert_eq!(body, Value::String("<title>crane</title>".into()));
    assert_eq!(f.get("/api/status").await.0, 200);
    assert!(f.twin.readiness().iter().any(|l| l.starts_with("hmi served")));

    let g = start_with(|c, o| {
        c.hmi_dir = Some(path.clone());
        o.headless = true;
    })
    .await;
    assert_eq!(g.get("/").await.0, 404);
    assert_eq!(g.get("/api/status").await.0, 200);
}
