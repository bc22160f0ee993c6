//! The simulated physical crane: true plant state, wind, sensors and faults.

use crane_twin_core::{step_rk4, CraneParameters, CraneState, PlantInput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    /// Swing encoder quantization step, radians per count.
    pub encoder_resolution: f64,
    pub encoder_bias: f64,
    pub position_noise_std: f64,
    pub anemometer_noise_std: f64,
    pub sample_period: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            encoder_resolution: std::f64::consts::TAU / 4096.0,
            encoder_bias: 0.0,
            position_noise_std: 0.0,
            anemometer_noise_std: 0.05,
            sample_period: 0.01,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.encoder_resolution > 0.0
            && self.encoder_resolution.is_finite()
            && self.encoder_bias.is_finite()
            && self.position_noise_std >= 0.0
            && self.position_noise_std.is_finite()
            && self.anemometer_noise_std >= 0.0
            && self.anemometer_noise_std.is_finite()
            && self.sample_period > 0.0
            && self.sample_period.is_finite();
        if ok {
            Ok(())
        } else {
            Err(ServiceError::BadRequest(
                "sensor resolution and sample period must be positive, noise non-negative".into(),
            ))
        }
    }
}

/// First-order filtered noise (Ornstein-Uhlenbeck) wind at the payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindModel {
    pub mean: f64,
    pub std: f64,
    /// Relaxation time, seconds.
    pub tau: f64,
}

impl Default for WindModel {
    fn default() -> Self {
        WindModel {
            mean: 0.0,
            std: 0.3,
            tau: 2.0,
        }
    }
}

impl WindModel {
    pub fn calm() -> Self {
        WindModel {
            mean: 0.0,
            std: 0.0,
            tau: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.is_finite() && self.std >= 0.0 && self.std.is_finite() && self.tau > 0.0 {
            Ok(())
        } else {
            Err(ServiceError::BadRequest(
                "wind std must be non-negative and tau positive".into(),
            ))
        }
    }
}

/// Deviation of the plant from its nominal model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultSpec {
    /// Multiplier on the swing damping.
    pub damping_scale: f64,
    /// Added to the rope length seen by the swing dynamics.
    pub rope_length_offset: f64,
    /// Added to the swing encoder bias.
    pub encoder_bias_extra: f64,
    pub active: bool,
}

impl Default for FaultSpec {
    fn default() -> Self {
        FaultSpec {
            damping_scale: 1.0,
            rope_length_offset: 0.0,
            encoder_bias_extra: 0.0,
            active: false,
        }
    }
}

impl FaultSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping_scale > 0.0 && self.damping_scale.is_finite()) {
            return Err(ServiceError::BadRequest(
                "damping_scale must be positive".into(),
            ));
        }
        if !self.rope_length_offset.is_finite() || !self.encoder_bias_extra.is_finite() {
            return Err(ServiceError::BadRequest("fault offsets must be finite".into()));
        }
        Ok(())
    }
}

/// Plant integration with sensor sampling.
///
/// Wind and sensor noise draw from separate seeded streams, so the wind
/// sequence depends only on the seed and the number of steps taken.
#[derive(Debug, Clone)]
pub struct Plant {
    params: CraneParameters,
    sensors: SensorModel,
    wind: WindModel,
    fault: FaultSpec,
    state: CraneState,
    dt: f64,
    zero_offset: f64,
    homed: bool,
    wind_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
}

impl Plant {
    pub fn new(
        params: CraneParameters,
        sensors: SensorModel,
        wind: WindModel,
        seed: u64,
        dt: f64,
        initial: CraneState,
    ) -> Result<Self> {
        params.validate()?;
        sensors.validate()?;
        wind.validate()?;
        if !(dt > 0.0) {
            return Err(ServiceError::BadRequest("plant step must be positive".into()));
        }
        let mut wind_rng = ChaCha8Rng::seed_from_u64(seed);
        wind_rng.set_stream(1);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
        noise_rng.set_stream(2);
        let mut state = initial;
        let n: f64 = StandardNormal.sample(&mut wind_rng);
        state.wind = wind.mean + wind.std * n;
        Ok(Plant {
            params,
            sensors,
            wind,
            fault: FaultSpec::default(),
            state,
            dt,
            zero_offset: 0.0,
            homed: false,
            wind_rng,
            noise_rng,
        })
    }

    pub fn params(&self) -> &CraneParameters {
        &self.params
    }

    pub fn sensors(&self) -> &SensorModel {
        &self.sensors
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn true_state(&self) -> &CraneState {
        &self.state
    }

    pub fn fault(&self) -> FaultSpec {
        self.fault
    }

    pub fn is_homed(&self) -> bool {
        self.homed
    }

    pub fn set_homed(&mut self, homed: bool) {
        self.homed = homed;
    }

    /// Declares the current cart position the coordinate origin.
    pub fn finish_homing(&mut self) {
        self.state.x = 0.0;
        self.state.v = 0.0;
        self.homed = true;
    }

    pub fn set_magnet(&mut self, on: bool) {
        self.state.magnet_on = on;
    }

    pub fn inject_fault(&mut self, fault: FaultSpec) -> Result<()> {
        fault.validate()?;
        self.fault = fault;
        Ok(())
    }

    /// Parameters the swing dynamics actually obey.
    fn effective(&self) -> (CraneParameters, f64) {
        let mut p = self.params;
        if !self.fault.active {
            return (p, 0.0);
        }
        p.swing_damping *= self.fault.damping_scale;
        let off = self.fault.rope_length_offset;
        p.rope_length_min += off;
        p.rope_length_max += off;
        (p, off)
    }

    fn advance_wind(&mut self) {
        let w = &self.wind;
        if w.std == 0.0 {
            self.state.wind = w.mean;
            return;
        }
        let a = (-self.dt / w.tau).exp();
        let n: f64 = StandardNormal.sample(&mut self.wind_rng);
        self.state.wind = w.mean + a * (self.state.wind - w.mean) + w.std * (1.0 - a * a).sqrt() * n;
    }

    /// Advances the plant by one integration step under `input`.
    pub fn step(&mut self, input: &PlantInput) -> Result<()> {
        self.advance_wind();
        let (p, off) = self.effective();
        let mut s = self.state;
        s.l += off;
        let mut next = step_rk4(&s, input, self.dt, &p)
            .map_err(|e| ServiceError::Internal(format!("plant integration failed: {e}")))?;
        next.l -= off;
        self.state = next;
        Ok(())
    }

    fn raw_encoder(&self) -> f64 {
        let res = self.sensors.encoder_resolution;
        let mut bias = self.sensors.encoder_bias;
        if self.fault.active {
            bias += self.fault.encoder_bias_extra;
        }
        ((self.state.theta + bias) / res).round() * res
    }

    /// Sensor reading of the current state. Cart position and wind carry
    /// noise, the swing angle is quantized, biased and zero-corrected; the
    /// remaining fields are the axis controllers' own values.
    pub fn measure(&mut self) -> CraneState {
        let mut m = self.state;
        m.theta = self.raw_encoder() - self.zero_offset;
        if self.sensors.position_noise_std > 0.0 {
            let n: f64 = StandardNormal.sample(&mut self.noise_rng);
            m.x += self.sensors.position_noise_std * n;
        }
        if self.sensors.anemometer_noise_std > 0.0 {
            let n: f64 = StandardNormal.sample(&mut self.noise_rng);
            m.wind += self.sensors.anemometer_noise_std * n;
        }
        m
    }

    /// Recalibrates the swing encoder so the current angle reads zero.
    pub fn zero(&mut self, max_rate: f64) -> Result<()> {
        if self.state.theta_dot.abs() > max_rate {
            return Err(ServiceError::State(format!(
                "payload still swinging at {:.4} rad/s",
                self.state.theta_dot
            )));
        }
        self.zero_offset = self.raw_encoder();
        Ok(())
    }
}
