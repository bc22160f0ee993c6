//! Numeric core of the gantry crane digital twin.
//!
//! - [`model`]: plant parameters, state and the fixed-step RK4 integrator
//! - [`trajectory`]: trapezoidal and zero-vibration shaped motion profiles
//! - [`metrics`]: RMSE, maximum deviation and banded DTW distances
//! - [`simulation`]: trajectory simulation, confidence envelopes and trace
//!   comparison
//!
//! Everything is generic over [`Real`]; the aliases below fix the scalar to
//! `f64`, which is what the services use.

pub mod error;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod simulation;
pub mod trajectory;

pub use error::{Error, Result};
pub use metrics::{dtw, max_dev, rmse, Metric, Signal};
pub use model::{derivatives, natural_frequency, step_rk4};
pub use scalar::Real;
pub use simulation::{
    compare_traces, confidence_envelope, simulate, simulate_with, PerturbedParameter, SimOptions,
    TraceKind,
};
pub use trajectory::{plan_trapezoid, plan_zv_shaped, resample, zv_impulses, Axis, ProfileMode};

pub type CraneParameters = model::CraneParameters<f64>;
pub type CraneState = model::CraneState<f64>;
pub type PlantInput = model::PlantInput<f64>;
pub type StateDerivative = model::StateDerivative<f64>;
pub type Waypoint = trajectory::Waypoint<f64>;
pub type Trajectory = trajectory::Trajectory<f64>;
pub type ZvShaper = trajectory::ZvShaper<f64>;
pub type Trace = simulation::Trace<f64>;
pub type EnvelopeConfig = simulation::EnvelopeConfig<f64>;
pub type MetricResult = metrics::MetricResult<f64>;

/// Single-precision variants.
pub mod f32 {
    pub type CraneParameters = crate::model::CraneParameters<f32>;
    pub type CraneState = crate::model::CraneState<f32>;
    pub type PlantInput = crate::model::PlantInput<f32>;
    pub type Trajectory = crate::trajectory::Trajectory<f32>;
    pub type Trace = crate::simulation::Trace<f32>;
}
