//! Durable storage for crane runs.
//!
//! Each run gets a directory holding its manifest, its measured, simulated
//! and envelope traces as JSON lines, and its validation report. A separate
//! day-partitioned log keeps the continuous telemetry stream. Files are
//! append-only or replaced atomically, so a reader never sees a half
//! written record.

mod error;
mod records;
mod store;

pub use error::{HistorianError, Result};
pub use records::{LoggerConfig, RunRecord, RunStatus, ValidationReport};
pub use store::{Historian, TraceWriter, DATA_DIR_ENV};
