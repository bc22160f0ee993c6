use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::Instant;

use chrono::{NaiveDate, Utc};
use crane_twin_core::{Axis, CraneState, ProfileMode, Trace, TraceKind, Trajectory, Waypoint};
use serde::{Deserialize, Serialize};

use crate::error::{HistorianError, Result};
use crate::records::{LoggerConfig, RunRecord, RunStatus, ValidationReport};

pub const DATA_DIR_ENV: &str = "CRANETWIN_DATA_DIR";

const INDEX_FILE: &str = "index.jsonl";
const MANIFEST_FILE: &str = "manifest.json";
const REPORT_FILE: &str = "validation.json";
const TRAJECTORY_FILE: &str = "trajectory.jsonl";

/// First line of every trace file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TraceHeader {
    run_id: String,
    kind: TraceKind,
    dt: f64,
}

/// First line of a stored trajectory; the waypoints follow one per line.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrajectoryHeader {
    id: String,
    axis: Axis,
    mode: ProfileMode,
    dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    design_rope_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    damping_ratio: Option<f64>,
}

/// File-backed store rooted at a data directory.
///
/// ```text
/// <root>/index.jsonl                  run record snapshots, append-only
/// <root>/runs/<run_id>/manifest.json  latest run record
/// <root>/runs/<run_id>/trajectory.jsonl header line, then one waypoint per line
/// <root>/runs/<run_id>/<kind>.jsonl   header line, then one state per line
/// <root>/runs/<run_id>/validation.json
/// <root>/live/<YYYY-MM-DD>.jsonl      continuous telemetry
/// ```
pub struct Historian {
    root: PathBuf,
    logger: RwLock<LoggerConfig>,
    index_lock: Mutex<()>,
    live: Mutex<Option<LiveWriter>>,
}

impl std::fmt::Debug for Historian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Historian").field("root", &self.root).finish()
    }
}

impl Historian {
    pub fn open(root: impl Into<PathBuf>, logger: LoggerConfig) -> Result<Self> {
        logger.validate()?;
        let root = root.into();
        fs::create_dir_all(root.join("runs"))?;
        fs::create_dir_all(root.join("live"))?;
        Ok(Historian {
            root,
            logger: RwLock::new(logger),
            index_lock: Mutex::new(()),
            live: Mutex::new(None),
        })
    }

    /// `CRANETWIN_DATA_DIR` when set, otherwise `default`.
    pub fn data_dir_from_env(default: impl Into<PathBuf>) -> PathBuf {
        std::env::var_os(DATA_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| default.into())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn logger_config(&self) -> LoggerConfig {
        *self.logger.read().unwrap()
    }

    /// Replaces the writeout settings. Writers opened earlier keep theirs;
    /// the live log picks up the change on its next sample.
    pub fn set_logger_config(&self, logger: LoggerConfig) -> Result<()> {
        logger.validate()?;
        *self.logger.write().unwrap() = logger;
        Ok(())
    }

    fn run_dir(&self, run_id: &str) -> Result<PathBuf> {
        if run_id.is_empty()
            || !run_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(HistorianError::Invalid(format!("bad run id {run_id:?}")));
        }
        Ok(self.root.join("runs").join(run_id))
    }

    fn existing_run_dir(&self, run_id: &str) -> Result<PathBuf> {
        let dir = self.run_dir(run_id)?;
        if !dir.join(MANIFEST_FILE).is_file() {
            return Err(HistorianError::NotFound(format!("run {run_id}")));
        }
        Ok(dir)
    }

    fn append_index(&self, record: &RunRecord) -> Result<()> {
        let mut line = serde_json::to_string(record).map_err(io_err)?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join(INDEX_FILE))?;
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }

    /// Registers a new run. Fails with a conflict when the id is taken.
    pub fn create_run(&self, record: &RunRecord) -> Result<()> {
        let dir = self.run_dir(&record.run_id)?;
        let _guard = self.index_lock.lock().unwrap();
        match fs::create_dir(&dir) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(HistorianError::Conflict(format!(
                    "run {} already exists",
                    record.run_id
                )))
            }
            Err(e) => return Err(e.into()),
        }
        write_json_atomic(&dir.join(MANIFEST_FILE), record)?;
        self.append_index(record)
    }

    /// Marks a run finished and stamps its completion time.
    pub fn complete_run(&self, run_id: &str, status: RunStatus) -> Result<RunRecord> {
        let dir = self.existing_run_dir(run_id)?;
        let _guard = self.index_lock.lock().unwrap();
        let mut record: RunRecord = read_json(&dir.join(MANIFEST_FILE))?;
        if record.status != RunStatus::Running {
            return Err(HistorianError::Conflict(format!(
                "run {run_id} already {}",
                record.status.as_str()
            )));
        }
        record.status = status;
        record.completed_at = Some(Utc::now());
        write_json_atomic(&dir.join(MANIFEST_FILE), &record)?;
        self.append_index(&record)?;
        Ok(record)
    }

    pub fn get_run(&self, run_id: &str) -> Result<RunRecord> {
        let dir = self.existing_run_dir(run_id)?;
        read_json(&dir.join(MANIFEST_FILE))
    }

    /// Latest record of every run, oldest first.
    pub fn list_runs(&self) -> Result<Vec<RunRecord>> {
        let path = self.root.join(INDEX_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut order: Vec<String> = Vec::new();
        let mut latest: HashMap<String, RunRecord> = HashMap::new();
        for line in complete_lines(&text) {
            let rec: RunRecord = parse_line(line, &path)?;
            if !latest.contains_key(&rec.run_id) {
                order.push(rec.run_id.clone());
            }
            latest.insert(rec.run_id.clone(), rec);
        }
        Ok(order
            .into_iter()
            .filter_map(|id| latest.remove(&id))
            .collect())
    }

    fn trace_path(&self, run_id: &str, kind: TraceKind) -> Result<PathBuf> {
        Ok(self
            .existing_run_dir(run_id)?
            .join(format!("{}.jsonl", kind.as_str())))
    }

    /// Opens a streaming writer for one trace of a run, replacing any
    /// earlier trace of that kind. `dt` is the spacing of the appended
    /// samples; the stored spacing is `dt` times the decimation.
    pub fn trace_writer(&self, run_id: &str, kind: TraceKind, dt: f64) -> Result<TraceWriter> {
        self.trace_writer_with(run_id, kind, dt, self.logger_config())
    }

    /// Like [`Historian::trace_writer`] with explicit writeout settings.
    pub fn trace_writer_with(
        &self,
        run_id: &str,
        kind: TraceKind,
        dt: f64,
        logger: LoggerConfig,
    ) -> Result<TraceWriter> {
        logger.validate()?;
        let path = self.trace_path(run_id, kind)?;
        let header = TraceHeader {
            run_id: run_id.to_string(),
            kind,
            dt: dt * logger.writeout_decimation as f64,
        };
        let mut out = BufWriter::new(File::create(&path)?);
        write_line(&mut out, &header)?;
        out.flush()?;
        Ok(TraceWriter {
            out: JsonlWriter::new(out, logger),
        })
    }

    /// Stores a complete trace in one piece without decimation.
    pub fn write_trace(&self, run_id: &str, trace: &Trace) -> Result<()> {
        let path = self.trace_path(run_id, trace.kind)?;
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            write_line(
                &mut out,
                &TraceHeader {
                    run_id: run_id.to_string(),
                    kind: trace.kind,
                    dt: trace.dt,
                },
            )?;
            for s in &trace.samples {
                write_line(&mut out, s)?;
            }
            out.flush()?;
            out.get_ref().sync_data()?;
        }
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn has_trace(&self, run_id: &str, kind: TraceKind) -> bool {
        self.trace_path(run_id, kind)
            .map(|p| p.is_file())
            .unwrap_or(false)
    }

    /// Samples of a stored trace with `from <= t <= to`; missing bounds are
    /// open.
    pub fn query_trace(
        &self,
        run_id: &str,
        kind: TraceKind,
        from: Option<f64>,
        to: Option<f64>,
    ) -> Result<Trace> {
        check_interval(from, to)?;
        let path = self.trace_path(run_id, kind)?;
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(HistorianError::NotFound(format!(
                    "{} trace of run {run_id}",
                    kind.as_str()
                )))
            }
            Err(e) => return Err(e.into()),
        };
        let mut lines = complete_lines(&text);
        let header: TraceHeader = match lines.next() {
            Some(l) => parse_line(l, &path)?,
            None => {
                return Err(HistorianError::NotFound(format!(
                    "{} trace of run {run_id}",
                    kind.as_str()
                )))
            }
        };
        let samples = parse_states(lines, &path, from, to)?;
        Ok(Trace {
            id: run_id.to_string(),
            kind: header.kind,
            dt: header.dt,
            samples,
        })
    }

    /// Stores the profile a run executes.
    pub fn write_trajectory(&self, run_id: &str, traj: &Trajectory) -> Result<()> {
        let path = self.existing_run_dir(run_id)?.join(TRAJECTORY_FILE);
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            write_line(
                &mut out,
                &TrajectoryHeader {
                    id: traj.id.clone(),
                    axis: traj.axis,
                    mode: traj.mode,
                    dt: traj.dt,
                    design_rope_length: traj.design_rope_length,
                    damping_ratio: traj.damping_ratio,
                },
            )?;
            for w in &traj.waypoints {
                write_line(&mut out, w)?;
            }
            out.flush()?;
            out.get_ref().sync_data()?;
        }
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn query_trajectory(&self, run_id: &str) -> Result<Trajectory> {
        let path = self.existing_run_dir(run_id)?.join(TRAJECTORY_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(HistorianError::NotFound(format!("trajectory of run {run_id}")))
            }
            Err(e) => return Err(e.into()),
        };
        let mut lines = complete_lines(&text);
        let header: TrajectoryHeader = match lines.next() {
            Some(l) => parse_line(l, &path)?,
            None => return Err(HistorianError::NotFound(format!("trajectory of run {run_id}"))),
        };
        let waypoints = lines
            .map(|l| parse_line::<Waypoint>(l, &path))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trajectory {
            id: header.id,
            axis: header.axis,
            mode: header.mode,
            dt: header.dt,
            waypoints,
            design_rope_length: header.design_rope_length,
            damping_ratio: header.damping_ratio,
        })
    }

    /// Stores the validation report of a run. A second report replaces the
    /// first; the replacement is recorded in its notes.
    pub fn store_report(&self, report: &ValidationReport) -> Result<ValidationReport> {
        let path = self.existing_run_dir(&report.run_id)?.join(REPORT_FILE);
        let mut report = report.clone();
        if let Ok(previous) = read_json::<ValidationReport>(&path) {
            let note = format!(
                "replaces report created at {}",
                previous.created_at.to_rfc3339()
            );
            if report.notes.is_empty() {
                report.notes = note;
            } else {
                report.notes = format!("{}; {note}", report.notes);
            }
        }
        write_json_atomic(&path, &report)?;
        Ok(report)
    }

    pub fn query_report(&self, run_id: &str) -> Result<ValidationReport> {
        let path = self.existing_run_dir(run_id)?.join(REPORT_FILE);
        if !path.is_file() {
            return Err(HistorianError::NotFound(format!(
                "validation report of run {run_id}"
            )));
        }
        read_json(&path)
    }

    fn live_path(&self, date: NaiveDate) -> PathBuf {
        self.root
            .join("live")
            .join(format!("{}.jsonl", date.format("%Y-%m-%d")))
    }

    /// Appends one sample to the continuous telemetry log, partitioned by
    /// UTC wall-clock day and decimated like run traces.
    pub fn append_live(&self, state: &CraneState) -> Result<bool> {
        let today = Utc::now().date_naive();
        let logger = self.logger_config();
        let mut live = self.live.lock().unwrap();
        if live.as_ref().map(|w| w.date) != Some(today) {
            if let Some(mut old) = live.take() {
                old.out.flush()?;
            }
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(self.live_path(today))?;
            *live = Some(LiveWriter {
                date: today,
                out: JsonlWriter::new(BufWriter::new(f), logger),
            });
        }
        let out = &mut live.as_mut().unwrap().out;
        out.decimation = logger.writeout_decimation;
        out.flush_period = logger.buffer_flush_period;
        out.append(state)
    }

    pub fn flush_live(&self) -> Result<()> {
        if let Some(w) = self.live.lock().unwrap().as_mut() {
            w.out.flush()?;
        }
        Ok(())
    }

    /// Live samples of one day with `from <= t <= to`.
    pub fn query_live(
        &self,
        date: NaiveDate,
        from: Option<f64>,
        to: Option<f64>,
    ) -> Result<Vec<CraneState>> {
        check_interval(from, to)?;
        let path = self.live_path(date);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        parse_states(complete_lines(&text), &path, from, to)
    }
}

impl Drop for Historian {
    fn drop(&mut self) {
        if let Ok(mut live) = self.live.lock() {
            if let Some(w) = live.as_mut() {
                let _ = w.out.flush();
            }
        }
    }
}

struct LiveWriter {
    date: NaiveDate,
    out: JsonlWriter,
}

/// Decimating line writer with a periodic flush.
struct JsonlWriter {
    out: BufWriter<File>,
    decimation: usize,
    flush_period: f64,
    appended: usize,
    stored: usize,
    last_flush: Instant,
}

impl JsonlWriter {
    fn new(out: BufWriter<File>, cfg: LoggerConfig) -> Self {
        JsonlWriter {
            out,
            decimation: cfg.writeout_decimation,
            flush_period: cfg.buffer_flush_period,
            appended: 0,
            stored: 0,
            last_flush: Instant::now(),
        }
    }

    fn append(&mut self, state: &CraneState) -> Result<bool> {
        let keep = self.appended.is_multiple_of(self.decimation);
        self.appended += 1;
        if keep {
            write_line(&mut self.out, state)?;
            self.stored += 1;
        }
        if self.last_flush.elapsed().as_secs_f64() >= self.flush_period {
            self.flush()?;
        }
        Ok(keep)
    }

    fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        self.out.get_ref().sync_data()?;
        self.last_flush = Instant::now();
        Ok(())
    }
}

/// Streams samples into one trace file. Every `writeout_decimation`-th
/// sample is kept, starting with the first.
pub struct TraceWriter {
    out: JsonlWriter,
}

impl TraceWriter {
    /// Returns whether the sample was stored.
    pub fn append(&mut self, state: &CraneState) -> Result<bool> {
        self.out.append(state)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()
    }

    pub fn appended(&self) -> usize {
        self.out.appended
    }

    pub fn stored(&self) -> usize {
        self.out.stored
    }

    /// Flushes and closes the file, returning the stored sample count.
    pub fn decimation(&self) -> usize {
        self.out.decimation
    }

    pub fn finish(mut self) -> Result<usize> {
        self.out.flush()?;
        Ok(self.out.stored)
    }
}

impl Drop for TraceWriter {
    fn drop(&mut self) {
        let _ = self.out.out.flush();
    }
}

fn io_err(e: serde_json::Error) -> HistorianError {
    HistorianError::Io(e.into())
}

fn write_line<W: Write, S: Serialize>(out: &mut W, value: &S) -> Result<()> {
    serde_json::to_writer(&mut *out, value).map_err(io_err)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn write_json_atomic<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = File::create(&tmp)?;
        serde_json::to_writer_pretty(&mut f, value).map_err(io_err)?;
        f.write_all(b"\n")?;
        f.sync_data()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| HistorianError::Corrupt {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Newline-terminated lines only; a torn final line from a concurrent
/// writer is skipped.
fn complete_lines(text: &str) -> impl Iterator<Item = &str> {
    let end = text.rfind('\n').map(|i| i + 1).unwrap_or(0);
    text[..end].lines().filter(|l| !l.trim().is_empty())
}

fn parse_line<D: for<'de> Deserialize<'de>>(line: &str, path: &Path) -> Result<D> {
    serde_json::from_str(line).map_err(|e| HistorianError::Corrupt {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn parse_states<'a>(
    lines: impl Iterator<Item = &'a str>,
    path: &Path,
    from: Option<f64>,
    to: Option<f64>,
) -> Result<Vec<CraneState>> {
    let mut out = Vec::new();
    for line in lines {
        let s: CraneState = parse_line(line, path)?;
        if from.is_some_and(|f| s.t < f) || to.is_some_and(|t| s.t > t) {
            continue;
        }
        out.push(s);
    }
    Ok(out)
}

fn check_interval(from: Option<f64>, to: Option<f64>) -> Result<()> {
    if from.is_some_and(|f| f.is_nan()) || to.is_some_and(|t| t.is_nan()) {
        return Err(HistorianError::Invalid("interval bound is NaN".into()));
    }
    if let (Some(f), Some(t)) = (from, to) {
        if f > t {
            return Err(HistorianError::Invalid(format!(
                "empty interval [{f}, {t}]"
            )));
        }
    }
    Ok(())
}
