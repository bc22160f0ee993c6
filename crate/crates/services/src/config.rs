//! Stack configuration, loaded from TOML.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use crane_twin_core::{CraneParameters, EnvelopeConfig, Metric, Signal};
use crane_twin_historian::LoggerConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::plant::{SensorModel, WindModel};

pub const CONFIG_ENV: &str = "CRANETWIN_CONFIG";

/// Thresholds of the three metrics for one signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalThresholds {
    pub rmse: f64,
    pub max_dev: f64,
    pub dtw: f64,
}

impl SignalThresholds {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Rmse => self.rmse,
            Metric::MaxDev => self.max_dev,
            Metric::Dtw => self.dtw,
        }
    }

    fn get_mut(&mut self, metric: Metric) -> &mut f64 {
        match metric {
            Metric::Rmse => &mut self.rmse,
            Metric::MaxDev => &mut self.max_dev,
            Metric::Dtw => &mut self.dtw,
        }
    }
}

/// Acceptable distance between measured and simulated traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub x: SignalThresholds,
    pub theta: SignalThresholds,
    pub l: SignalThresholds,
}

impl Thresholds {
    pub fn uniform(value: f64) -> Self {
        let s = SignalThresholds {
            rmse: value,
            max_dev: value,
            dtw: value,
        };
        Thresholds { x: s, theta: s, l: s }
    }

    pub fn signal(&self, signal: Signal) -> &SignalThresholds {
        match signal {
            Signal::X => &self.x,
            Signal::Theta => &self.theta,
            Signal::L => &self.l,
        }
    }

    pub fn get(&self, signal: Signal, metric: Metric) -> f64 {
        self.signal(signal).get(metric)
    }

    pub fn set(&mut self, signal: Signal, metric: Metric, value: f64) {
        let s = match signal {
            Signal::X => &mut self.x,
            Signal::Theta => &mut self.theta,
            Signal::L => &mut self.l,
        };
        *s.get_mut(metric) = value;
    }

    /// Every (signal, metric) pair with its threshold.
    pub fn checks(&self) -> Vec<(Signal, Metric, f64)> {
        Signal::ALL
            .iter()
            .flat_map(|&s| Metric::ALL.iter().map(move |&m| (s, m, self.get(s, m))))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (s, m, v) in self.checks() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ServiceError::BadRequest(format!(
                    "threshold {}.{} must be finite and non-negative",
                    s.as_str(),
                    m.as_str()
                )));
            }
        }
        Ok(())
    }
}

/// Motion and command settings of the virtual crane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    /// Fraction of the axis rate limits used while homing.
    pub home_speed_fraction: f64,
    /// Rest appended after each run so residual swing is recorded.
    pub settle_time: f64,
    /// Largest swing rate at which zeroing is accepted, rad/s.
    pub zero_rate_threshold: f64,
    /// Cart position at power-up, before homing.
    pub initial_x: f64,
    pub initial_l: f64,
    /// Design run shapers for the damped nominal plant, with
    /// ζ = c_θ / (2 ω_n), instead of the undamped one.
    pub derive_damping_ratio: bool,
    /// Seconds to wait for the trajectory generator.
    pub trajectory_timeout: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig {
            home_speed_fraction: 0.5,
            settle_time: 2.0,
            zero_rate_threshold: 0.02,
            initial_x: 0.1,
            initial_l: 0.5,
            derive_damping_ratio: true,
            trajectory_timeout: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwinConfig {
    pub broker_addr: String,
    pub gateway_addr: String,
    pub data_dir: PathBuf,
    /// Directory of the operator console's static files, served under `/`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hmi_dir: Option<PathBuf>,
    pub seed: u64,
    /// Simulated seconds per wall-clock second; 0 runs as fast as possible
    /// and only while a motion is active.
    pub time_scale: f64,
    /// Plant integration step.
    pub plant_dt: f64,
    /// Sakoe-Chiba half-width, in samples, for the dtw metric.
    pub dtw_band: usize,
    pub params: CraneParameters,
    pub sensors: SensorModel,
    pub wind: WindModel,
    pub motion: MotionConfig,
    pub envelope: EnvelopeConfig,
    pub logger: LoggerConfig,
    /// Calibrated on first start when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Thresholds>,
}

impl Default for TwinConfig {
    fn default() -> Self {
        TwinConfig {
            broker_addr: "127.0.0.1:7878".into(),
            gateway_addr: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("data"),
            hmi_dir: None,
            seed: 42,
            time_scale: 1.0,
            plant_dt: 1e-3,
            dtw_band: 50,
            params: CraneParameters::default(),
            sensors: SensorModel::default(),
            wind: WindModel::default(),
            motion: MotionConfig::default(),
            envelope: EnvelopeConfig::default(),
            logger: LoggerConfig::default(),
            thresholds: None,
        }
    }
}

fn bad(msg: impl Into<String>) -> ServiceError {
    ServiceError::BadRequest(msg.into())
}

impl TwinConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TwinConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration is always representable in TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("toml.tmp");
        std::fs::write(&tmp, self.to_toml_string())
            .and_then(|_| std::fs::rename(&tmp, path))
            .map_err(|e| ServiceError::Internal(format!("cannot write {}: {e}", path.display())))
    }

    /// Integration steps per sensor sample.
    pub fn sample_ratio(&self) -> usize {
        (self.sensors.sample_period / self.plant_dt).round() as usize
    }

    /// Damping ratio used for shaper design at rope length `l`.
    pub fn shaper_damping_ratio(&self, l: f64) -> f64 {
        if self.motion.derive_damping_ratio {
            self.nominal_damping_ratio(l)
        } else {
            0.0
        }
    }

    /// Damping ratio of the nominal swing at rope length `l`.
    pub fn nominal_damping_ratio(&self, l: f64) -> f64 {
        let omega = (self.params.gravity / l).sqrt();
        (self.params.swing_damping / (2.0 * omega)).min(0.99)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, addr) in [("broker_addr", &self.broker_addr), ("gateway_addr", &self.gateway_addr)] {
            addr.parse::<SocketAddr>()
                .map_err(|_| bad(format!("{name} {addr:?} is not a socket address")))?;
        }
        if !(self.time_scale >= 0.0 && self.time_scale.is_finite()) {
            return Err(bad("time_scale must be finite and non-negative"));
        }
        if !(self.plant_dt > 0.0 && self.plant_dt.is_finite()) {
            return Err(bad("plant_dt must be positive"));
        }
        if self.dtw_band == 0 {
            return Err(bad("dtw_band must be at least 1"));
        }
        self.params.validate().map_err(|e| bad(e.to_string()))?;
        self.sensors.validate()?;
        self.wind.validate()?;
        let ratio = self.sensors.sample_period / self.plant_dt;
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 {
            return Err(bad(
                "sensors.sample_period must be a whole multiple of plant_dt",
            ));
        }
        let m = &self.motion;
        if !(m.home_speed_fraction > 0.0 && m.home_speed_fraction <= 1.0) {
            return Err(bad("motion.home_speed_fraction must lie in (0, 1]"));
        }
        if !(m.settle_time >= 0.0 && m.settle_time.is_finite()) {
            return Err(bad("motion.settle_time must be non-negative"));
        }
        if !(m.zero_rate_threshold > 0.0) {
            return Err(bad("motion.zero_rate_threshold must be positive"));
        }
        if !(m.trajectory_timeout > 0.0) {
            return Err(bad("motion.trajectory_timeout must be positive"));
        }
        if !(0.0..=self.params.cart_travel_max).contains(&m.initial_x) {
            return Err(bad("motion.initial_x outside cart travel"));
        }
        if !(self.params.rope_length_min..=self.params.rope_length_max).contains(&m.initial_l) {
            return Err(bad("motion.initial_l outside rope limits"));
        }
        self.envelope.validate().map_err(|e| bad(e.to_string()))?;
        self.logger.validate().map_err(|e| bad(e.to_string()))?;
        if let Some(t) = &self.thresholds {
            t.validate()?;
        }
        Ok(())
    }

    /// Applies a JSON merge patch and validates the result. Only settings
    /// that take effect without a restart may change: `logger`,
    /// `thresholds`, `envelope` and `dtw_band`.
    pub fn patched(&self, patch: &serde_json::Value) -> Result<Self> {
        if !patch.is_object() {
            return Err(bad("configuration update must be an object"));
        }
        let mut doc = serde_json::to_value(self).map_err(|e| ServiceError::Internal(e.to_string()))?;
        merge_patch(&mut doc, patch);
        let next: TwinConfig = serde_json::from_value(doc).map_err(|e| bad(e.to_string()))?;
        next.validate()?;
        let frozen = TwinConfig {
            logger: self.logger,
            thresholds: self.thresholds,
            envelope: self.envelope.clone(),
            dtw_band: self.dtw_band,
            ..next.clone()
        };
        if self.thresholds.is_some() && next.thresholds.is_none() {
            return Err(bad("thresholds cannot be removed"));
        }
        if frozen != *self {
            return Err(bad(
                "only logger, thresholds, envelope and dtw_band can change while running",
            ));
        }
        Ok(next)
    }
}

fn merge_patch(target: &mut serde_json::Value, patch: &serde_json::Value) {
    use serde_json::Value;
    match (target, patch) {
        (Value::Object(t), Value::Object(p)) => {
            for (k, v) in p {
                if v.is_null() {
                    t.remove(k);
                } else {
                    merge_patch(t.entry(k.clone()).or_insert(Value::Null), v);
                }
            }
        }
        (t, p) => *t = p.clone(),
    }
}

/// Configuration shared between the services and the gateway.
pub type SharedConfig = Arc<RwLock<TwinConfig>>;

pub fn shared(config: TwinConfig) -> SharedConfig {
    Arc::new(RwLock::new(config))
}
