//! Services of the crane twin.
//!
//! The [`VirtualCrane`] owns the simulated plant and executes runs. The
//! trajectory generator, simulation and validation services react to bus
//! messages; the logger keeps idle telemetry. [`Stack`] starts them all
//! around one broker and one historian.

pub mod calibration;
pub mod config;
pub mod crane;
mod error;
pub mod generator;
pub mod logger;
pub mod payloads;
pub mod plant;
pub mod simulator;
pub mod stack;
pub mod validation;

pub use config::{SharedConfig, Thresholds, TwinConfig, CONFIG_ENV};
pub use crane::VirtualCrane;
pub use error::{Result, ServiceError};
pub use payloads::*;
pub use plant::{FaultSpec, Plant, SensorModel, WindModel};
pub use stack::{Stack, StackOptions};
pub use validation::Validator;
