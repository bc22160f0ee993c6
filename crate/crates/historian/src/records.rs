use chrono::{DateTime, Utc};
use crane_twin_core::{Axis, MetricResult, ProfileMode};
use serde::{Deserialize, Serialize};

use crate::error::{HistorianError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Aborted,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Running => "running",
            RunStatus::Completed => "completed",
            RunStatus::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub trajectory_id: String,
    pub axis: Axis,
    pub mode: ProfileMode,
    pub started_at: DateTime<Utc>,
    #[serde(default)]
    pub completed_at: Option<DateTime<Utc>>,
    pub status: RunStatus,
    pub fault_active: bool,
}

impl RunRecord {
    pub fn new(run_id: impl Into<String>, axis: Axis, mode: ProfileMode, fault_active: bool) -> Self {
        RunRecord {
            run_id: run_id.into(),
            trajectory_id: String::new(),
            axis,
            mode,
            started_at: Utc::now(),
            completed_at: None,
            status: RunStatus::Running,
            fault_active,
        }
    }
}

/// Logger writeout settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoggerConfig {
    /// Store every n-th sample.
    pub writeout_decimation: usize,
    /// Seconds between buffer flushes while a trace is being written.
    pub buffer_flush_period: f64,
}

impl Default for LoggerConfig {
    fn default() -> Self {
        LoggerConfig {
            writeout_decimation: 1,
            buffer_flush_period: 1.0,
        }
    }
}

impl LoggerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.writeout_decimation < 1 {
            return Err(HistorianError::Invalid("writeout_decimation must be at least 1".into()));
        }
        if !(self.buffer_flush_period > 0.0 && self.buffer_flush_period.is_finite()) {
            return Err(HistorianError::Invalid("buffer_flush_period must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of comparing a run's measured trace with its simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub run_id: String,
    pub created_at: DateTime<Utc>,
    pub results: Vec<MetricResult>,
    /// Conjunction of every result's verdict.
    pub overall_pass: bool,
    #[serde(default)]
    pub notes: String,
}

impl ValidationReport {
    pub fn new(run_id: impl Into<String>, results: Vec<MetricResult>) -> Self {
        let overall_pass = results.iter().all(|r| r.pass);
        ValidationReport {
            run_id: run_id.into(),
            created_at: Utc::now(),
            results,
            overall_pass,
            notes: String::new(),
        }
    }

    pub fn failed(&self) -> impl Iterator<Item = &MetricResult> {
        self.results.iter().filter(|r| !r.pass)
    }
}
