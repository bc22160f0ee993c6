use std::fs::OpenOptions;
use std::io::Write;

use chrono::Utc;
use crane_twin_core::{Axis, CraneState, Metric, MetricResult, ProfileMode, Signal, Trace, TraceKind};
use crane_twin_historian::{
    Historian, HistorianError, LoggerConfig, RunRecord, RunStatus, ValidationReport,
};
use proptest::prelude::*;

fn state(k: usize) -> CraneState {
    let t = k as f64 * 0.01;
    CraneState {
        t,
        x: 0.1 + 0.3 * (t * 1.7).sin(),
        v: 0.51 * (t * 1.7).cos(),
        l: 0.5 + 1e-3 * t,
        l_dot: 1e-3,
        theta: 0.02 * (t * 4.4).sin() / 3.0,
        theta_dot: 1.0 / 3.0 * t,
        wind: -0.123456789012345 * t,
        magnet_on: k % 3 == 0,
    }
}

fn open(dir: &std::path::Path, n: usize) -> Historian {
    Historian::open(
        dir,
        LoggerConfig {
            writeout_decimation: n,
            buffer_flush_period: 0.5,
        },
    )
    .unwrap()
}

fn new_run(h: &Historian, id: &str) -> RunRecord {
    let rec = RunRecord::new(id, Axis::Cart, ProfileMode::ZvShaped, false);
    h.create_run(&rec).unwrap();
    rec
}

#[test]
fn restart_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let samples: Vec<CraneState> = (0..500).map(state).collect();
    let trace = Trace {
        id: "r1".into(),
        kind: TraceKind::Simulated,
        dt: 0.01,
        samples: samples.clone(),
    };
    let report = ValidationReport::new(
        "r1",
        vec![
            MetricResult::new(Signal::X, Metric::Rmse, 1.0 / 7.0, 0.2),
            MetricResult::new(Signal::Theta, Metric::Dtw, 0.3, 0.1),
        ],
    );
    let rec = {
        let h = open(dir.path(), 1);
        let rec = new_run(&h, "r1");
        let mut w = h.trace_writer("r1", TraceKind::Measured, 0.01).unwrap();
        for s in &samples {
            w.append(s).unwrap();
        }
        assert_eq!(w.finish().unwrap(), samples.len());
        h.write_trace("r1", &trace).unwrap();
        h.store_report(&report).unwrap();
        h.append_live(&samples[0]).unwrap();
        rec
    };

    let h = open(dir.path(), 1);
    let measured = h.query_trace("r1", TraceKind::Measured, None, None).unwrap();
    assert_eq!(measured.samples, samples);
    assert_eq!(measured.dt, 0.01);
    for (a, b) in measured.samples.iter().zip(&samples) {
        assert_eq!(a.wind.to_bits(), b.wind.to_bits());
        assert_eq!(a.theta.to_bits(), b.theta.to_bits());
    }
    assert_eq!(h.query_trace("r1", TraceKind::Simulated, None, None).unwrap(), trace);
    let back = h.query_report("r1").unwrap();
    assert_eq!(back, report);
    assert!(!back.overall_pass);
    assert_eq!(h.get_run("r1").unwrap(), rec);
    assert_eq!(h.list_runs().unwrap(), vec![rec]);
    let live = h.query_live(Utc::now().date_naive(), None, None).unwrap();
    assert_eq!(live, vec![samples[0]]);
}

#[test]
fn decimation_keeps_every_nth_sample() {
    for n in [1usize, 7, 10] {
        for count in [0usize, 1, 69, 70, 71, 250] {
            let dir = tempfile::tempdir().unwrap();
            let h = open(dir.path(), n);
            new_run(&h, "d");
            let mut w = h.trace_writer("d", TraceKind::Measured, 0.01).unwrap();
            for k in 0..count {
                w.append(&state(k)).unwrap();
            }
            let stored = w.finish().unwrap();
            assert_eq!(stored, count.div_ceil(n), "n={n} count={count}");
            let tr = h.query_trace("d", TraceKind::Measured, None, None).unwrap();
            assert_eq!(tr.samples.len(), stored);
            assert!((tr.dt - 0.01 * n as f64).abs() < 1e-15);
            for (i, s) in tr.samples.iter().enumerate() {
                assert_eq!(*s, state(i * n));
            }
        }
    }
}

#[test]
fn trajectory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let h = open(dir.path(), 1);
    new_run(&h, "tr");
    let p = crane_twin_core::CraneParameters::default();
    let traj = crane_twin_core::plan_zv_shaped(0.0, 0.37, 0.3, 1.0, 0.5, 0.0, 1e-3, &p)
        .unwrap()
        .with_hold(0.25);
    h.write_trajectory("tr", &traj).unwrap();
    assert_eq!(h.query_trajectory("tr").unwrap(), traj);
    let lines = std::fs::read_to_string(dir.path().join("runs/tr/trajectory.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), traj.waypoints.len() + 1);
    new_run(&h, "none");
    assert!(matches!(h.query_trajectory("none"), Err(HistorianError::NotFound(_))));
}

#[test]
fn interval_query_is_closed() {
    let dir = tempfile::tempdir().unwrap();
    let h = open(dir.path(), 1);
    new_run(&h, "q");
    let mut w = h.trace_writer("q", TraceKind::Measured, 0.01).unwrap();
    for k in 0..100 {
        w.append(&state(k)).unwrap();
    }
    w.finish().unwrap();
    let t10 = state(10).t;
    let t20 = state(20).t;
    let tr = h
        .query_trace("q", TraceKind::Measured, Some(t10), Some(t20))
        .unwrap();
    assert_eq!(tr.samples.len(), 11);
    assert_eq!(tr.samples[0].t, t10);
    assert_eq!(tr.samples[10].t, t20);
    let one = h
        .query_trace("q", TraceKind::Measured, Some(t10), Some(t10))
        .unwrap();
    assert_eq!(one.samples.len(), 1);
    assert!(matches!(
        h.query_trace("q", TraceKind::Measured, Some(1.0), Some(0.5)),
        Err(HistorianError::Invalid(_))
    ));
    let tail = h.query_trace("q", TraceKind::Measured, Some(0.95), None).unwrap();
    assert_eq!(tail.samples.len(), 5);
}

#[test]
fn torn_trailing_line_is_invisible() {
    let dir = tempfile::tempdir().unwrap();
    let h = open(dir.path(), 1);
    new_run(&h, "torn");
    let mut w = h.trace_writer("torn", TraceKind::Measured, 0.01).unwrap();
    for k in 0..5 {
        w.append(&state(k)).unwrap();
    }
    w.finish().unwrap();
    let path = dir.path().join("runs/torn/measured.jsonl");
    let mut f = OpenOptions::new().append(true).open(path).unwrap();
    f.write_all(b"{\"t\":0.05,\"x\":0.1").unwrap();
    let tr = h.query_trace("torn", TraceKind::Measured, None, None).unwrap();
    assert_eq!(tr.samples.len(), 5);
}

#[test]
fn unknown_runs_and_traces_are_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let h = open(dir.path(), 1);
    assert!(matches!(h.get_run("nope"), Err(HistorianError::NotFound(_))));
    assert!(matches!(
        h.query_trace("nope", TraceKind::Measured, None, None),
        Err(HistorianError::NotFound(_))
    ));
    new_run(&h, "r");
    assert!(matches!(
        h.query_trace("r", TraceKind::EnvelopeUpper, None, None),
        Err(HistorianError::NotFound(_))
    ));
    assert!(matches!(h.query_report("r"), Err(HistorianError::NotFound(_))));
    assert!(matches!(
        h.trace_writer("../x", TraceKind::Measured, 0.01),
        Err(HistorianError::Invalid(_))
    ));
}

#[test]
fn run_lifecycle_and_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let h = open(dir.path(), 1);
    new_run(&h, "a");
    new_run(&h, "b");
    let dup = RunRecord::new("a", Axis::Hoist, ProfileMode::Trapezoid, true);
    assert!(matches!(h.create_run(&dup), Err(HistorianError::Conflict(_))));

    let done = h.complete_run("a", RunStatus::Completed).unwrap();
    assert_eq!(done.status, RunStatus::Completed);
    assert!(done.completed_at.unwrap() >= done.started_at);
    assert!(matches!(
        h.complete_run("a", RunStatus::Aborted),
        Err(HistorianError::Conflict(_))
    ));

    let runs = h.list_runs().unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[0].run_id, "a");
    assert_eq!(runs[0].status, RunStatus::Completed);
    assert_eq!(runs[1].status, RunStatus::Running);
    assert_eq!(runs[0].axis, Axis::Cart);
}

#[test]
fn report_overwrite_is_noted() {
    let dir = tempfile::tempdir().unwrap();
    let h = open(dir.path(), 1);
    new_run(&h, "r");
    let first = ValidationReport::new("r", vec![MetricResult::new(Signal::L, Metric::MaxDev, 0.0, 0.1)]);
    let stored = h.store_report(&first).unwrap();
    assert!(stored.notes.is_empty());
    let second = ValidationReport::new("r", vec![MetricResult::new(Signal::L, Metric::MaxDev, 0.5, 0.1)]);
    let stored = h.store_report(&second).unwrap();
    assert!(stored.notes.contains("replaces report"));
    let back = h.query_report("r").unwrap();
    assert!(!back.overall_pass);
    assert_eq!(back.results, second.results);
}

#[test]
fn concurrent_run_creation() {
    let dir = tempfile::tempdir().unwrap();
    let h = std::sync::Arc::new(open(dir.path(), 1));
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let h = h.clone();
            std::thread::spawn(move || {
                for j in 0..10 {
                    new_run(&h, &format!("t{i}-{j}"));
                }
            })
        })
        .collect();
    for th in handles {
        th.join().unwrap();
    }
    assert_eq!(h.list_runs().unwrap().len(), 80);
}

#[test]
fn data_dir_env_override() {
    // Only this test touches the variable.
    std::env::set_var(crane_twin_historian::DATA_DIR_ENV, "/tmp/elsewhere");
    assert_eq!(
        Historian::data_dir_from_env("data"),
        std::path::PathBuf::from("/tmp/elsewhere")
    );
    std::env::remove_var(crane_twin_historian::DATA_DIR_ENV);
    assert_eq!(
        Historian::data_dir_from_env("data"),
        std::path::PathBuf::from("data")
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn arbitrary_floats_survive_storage(
        vals in proptest::collection::vec(
            (any::<f64>().prop_filter("finite", |v| v.is_finite()), -1e300f64..1e300, any::<bool>()),
            1..40,
        )
    ) {
        let dir = tempfile::tempdir().unwrap();
        let h = open(dir.path(), 1);
        new_run(&h, "p");
        let samples: Vec<CraneState> = vals
            .iter()
            .enumerate()
            .map(|(k, &(a, b, m))| CraneState {
                t: k as f64,
                x: a,
                theta: b,
                magnet_on: m,
                ..CraneState::default()
            })
            .collect();
        let mut w = h.trace_writer("p", TraceKind::Measured, 1.0).unwrap();
        for s in &samples {
            w.append(s).unwrap();
        }
        w.finish().unwrap();
        let back = h.query_trace("p", TraceKind::Measured, None, None).unwrap();
        prop_assert_eq!(back.samples, samples);
    }
}
