//! Message bodies carried on the bus topics.
//!
//! | topic                   | body                  |
//! |-------------------------|-----------------------|
//! | `crane/state`           | [`StatusSnapshot`]    |
//! | `crane/run/started`     | [`RunStarted`]        |
//! | `crane/run/completed`   | [`RunCompleted`]      |
//! | `dt/trajectory/request` | [`TrajectoryRequest`] |
//! | `dt/trajectory/result`  | [`TrajectoryResult`]  |
//! | `dt/simulation/request` | [`SimulationRequest`] |
//! | `dt/simulation/result`  | [`SimulationResult`]  |
//! | `dt/validation/report`  | [`ValidationReport`](crane_twin_historian::ValidationReport) |
//! | `dt/validation/alert`   | [`Alert`]             |

use chrono::{DateTime, Utc};
use crane_twin_core::{Axis, CraneState, MetricResult, ProfileMode, Trace, Trajectory};
use crane_twin_historian::RunStatus;
use serde::{Deserialize, Serialize};

use crate::plant::FaultSpec;

/// Latest sensor sample with the crane's flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusSnapshot {
    pub state: CraneState,
    pub homed: bool,
    pub busy: bool,
    pub fault_active: bool,
    pub fault: FaultSpec,
    /// Run the sample belongs to, if any.
    #[serde(default)]
    pub run_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHandle {
    pub run_id: String,
    pub trajectory_id: String,
    pub started_at: DateTime<Utc>,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStarted {
    pub run_id: String,
    /// The executed profile, including the settling hold.
    pub trajectory: Trajectory,
    /// Measured state at the start of the run.
    pub initial: CraneState,
    pub plant_dt: f64,
    /// Spacing of the stored measured samples.
    pub sample_period: f64,
    pub fault_active: bool,
    pub started_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCompleted {
    pub run_id: String,
    pub status: RunStatus,
    pub completed_at: DateTime<Utc>,
    /// Stored measured samples.
    pub samples: usize,
    pub final_state: CraneState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRequest {
    pub request_id: String,
    pub axis: Axis,
    pub mode: ProfileMode,
    pub p0: f64,
    pub p1: f64,
    /// Rate limits; the axis limits of the nominal parameters when absent.
    #[serde(default)]
    pub v_max: Option<f64>,
    #[serde(default)]
    pub a_max: Option<f64>,
    /// Shaper design rope length, required for shaped profiles.
    #[serde(default)]
    pub rope_length: Option<f64>,
    #[serde(default)]
    pub damping_ratio: Option<f64>,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub request_id: String,
    #[serde(default)]
    pub trajectory: Option<Trajectory>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRequest {
    pub request_id: String,
    /// Set for the automatic simulation of a run; the traces are then
    /// stored with the run instead of returned.
    #[serde(default)]
    pub run_id: Option<String>,
    pub trajectory: Trajectory,
    pub initial: CraneState,
    /// Output spacing; the configured sensor sample period when absent.
    #[serde(default)]
    pub sample_period: Option<f64>,
    #[serde(default = "yes")]
    pub envelope: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub request_id: String,
    #[serde(default)]
    pub run_id: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulated: Option<Trace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_lower: Option<Trace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_upper: Option<Trace>,
}

/// Operator notification for a failed validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub run_id: String,
    pub created_at: DateTime<Utc>,
    pub failed: Vec<MetricResult>,
    pub message: String,
}

pub fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}
