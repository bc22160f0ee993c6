//! Trajectory simulation, parameter-perturbed confidence envelopes and
//! trace comparison.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, Metric, MetricResult, Signal};
use crate::model::{step_rk4, CraneParameters, CraneState};
use crate::scalar::Real;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Measured,
    Simulated,
    EnvelopeLower,
    EnvelopeUpper,
}

impl TraceKind {
    pub const ALL: [TraceKind; 4] = [
        TraceKind::Measured,
        TraceKind::Simulated,
        TraceKind::EnvelopeLower,
        TraceKind::EnvelopeUpper,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TraceKind::Measured => "measured",
            TraceKind::Simulated => "simulated",
            TraceKind::EnvelopeLower => "envelope_lower",
            TraceKind::EnvelopeUpper => "envelope_upper",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// Uniformly sampled sequence of crane states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace<T> {
    pub id: String,
    pub kind: TraceKind,
    pub dt: T,
    pub samples: Vec<CraneState<T>>,
}

impl<T: Real> Trace<T> {
    pub fn signal(&self, signal: Signal) -> Vec<T> {
        self.samples.iter().map(|s| signal_of(s, signal)).collect()
    }

    pub fn start(&self) -> Option<T> {
        self.samples.first().map(|s| s.t)
    }

    pub fn end(&self) -> Option<T> {
        self.samples.last().map(|s| s.t)
    }

    /// Linear interpolation of every continuous field at time `t`; the
    /// magnet flag is held from the preceding sample. `None` outside the
    /// sampled range.
    pub fn interpolate(&self, t: T) -> Option<CraneState<T>> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        let eps = T::lit(1e-9);
        if t < first.t - eps || t > last.t + eps {
            return None;
        }
        let idx = self.samples.partition_point(|s| s.t <= t);
        if idx == 0 {
            return Some(*first);
        }
        let a = self.samples[idx - 1];
        if idx >= self.samples.len() || a.t == t {
            return Some(CraneState { t, ..a });
        }
        let b = self.samples[idx];
        let w = (t - a.t) / (b.t - a.t);
        let lerp = |p: T, q: T| p + (q - p) * w;
        Some(CraneState {
            t,
            x: lerp(a.x, b.x),
            v: lerp(a.v, b.v),
            l: lerp(a.l, b.l),
            l_dot: lerp(a.l_dot, b.l_dot),
            theta: lerp(a.theta, b.theta),
            theta_dot: lerp(a.theta_dot, b.theta_dot),
            wind: lerp(a.wind, b.wind),
            magnet_on: a.magnet_on,
        })
    }
}

pub fn signal_of<T: Copy>(state: &CraneState<T>, signal: Signal) -> T {
    match signal {
        Signal::X => state.x,
        Signal::Theta => state.theta,
        Signal::L => state.l,
    }
}

/// Integration step and output decimation for a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions<T> {
    pub dt: T,
    /// Keep every n-th integration step in the output trace.
    pub record_every: usize,
}

impl<T: Real> SimOptions<T> {
    pub fn every_step(dt: T) -> Self {
        Self { dt, record_every: 1 }
    }

    /// Integration at `dt`, output at the nearest whole multiple of `dt` to
    /// `sample_period`.
    pub fn sampled(dt: T, sample_period: T) -> Self {
        let ratio = (sample_period / dt).round().to_usize().unwrap_or(1).max(1);
        Self { dt, record_every: ratio }
    }
}

/// Number of integration steps of length `dt` covering the trajectory.
pub fn step_count<T: Real>(traj: &Trajectory<T>, dt: T) -> usize {
    if traj.dt == dt {
        traj.num_cells()
    } else {
        (traj.duration() / dt).round().to_usize().unwrap_or(0)
    }
}

/// Trajectory cell driving integration step `k` of length `dt`.
pub fn cell_for_step<T: Real>(traj: &Trajectory<T>, k: usize, dt: T) -> usize {
    if traj.dt == dt {
        k
    } else {
        let t = T::from_usize(k).unwrap() * dt;
        (t / traj.dt + T::lit(1e-9)).floor().to_usize().unwrap_or(0)
    }
}

/// Simulates the plant executing `traj` from `initial`, recording every step.
pub fn simulate<T: Real>(
    traj: &Trajectory<T>,
    params: &CraneParameters<T>,
    initial: &CraneState<T>,
    dt: T,
) -> Result<Trace<T>> {
    simulate_with(traj, params, initial, SimOptions::every_step(dt))
}

/// Simulates the plant executing `traj`, holding each trajectory cell's
/// acceleration over the integration steps it spans.
pub fn simulate_with<T: Real>(
    traj: &Trajectory<T>,
    params: &CraneParameters<T>,
    initial: &CraneState<T>,
    opts: SimOptions<T>,
) -> Result<Trace<T>> {
    if !(opts.dt > T::zero()) || opts.record_every == 0 {
        return Err(Error::domain("simulation step must be positive"));
    }
    let steps = step_count(traj, opts.dt);
    let mut samples = Vec::with_capacity(steps / opts.record_every + 1);
    let mut state = *initial;
    samples.push(state);
    for k in 0..steps {
        let input = traj.input_for_cell(cell_for_step(traj, k, opts.dt));
        state = step_rk4(&state, &input, opts.dt, params)?;
        if (k + 1) % opts.record_every == 0 {
            samples.push(state);
        }
    }
    Ok(Trace {
        id: traj.id.clone(),
        kind: TraceKind::Simulated,
        dt: opts.dt * T::from_usize(opts.record_every).unwrap(),
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbedParameter {
    /// Rope length of the initial state.
    #[serde(alias = "l")]
    RopeLength,
    #[serde(alias = "c_theta")]
    SwingDamping,
    #[serde(alias = "k_w")]
    WindGain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct EnvelopeConfig<T> {
    pub ensemble_size: usize,
    /// Relative half-width of the uniform perturbation box.
    pub perturbation: T,
    pub perturbed_parameters: Vec<PerturbedParameter>,
    pub seed: u64,
}

impl<T: Real> Default for EnvelopeConfig<T> {
    fn default() -> Self {
        Self {
            ensemble_size: 16,
            perturbation: T::lit(0.05),
            perturbed_parameters: vec![
                PerturbedParameter::RopeLength,
                PerturbedParameter::SwingDamping,
                PerturbedParameter::WindGain,
            ],
            seed: 7,
        }
    }
}

impl<T: Real> EnvelopeConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size == 0 {
            return Err(Error::domain("ensemble size must be at least 1"));
        }
        if !(self.perturbation >= T::zero() && self.perturbation < T::one()) {
            return Err(Error::domain("perturbation must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Parameter sets and initial states of the ensemble; member 0 is nominal.
fn ensemble_members<T: Real>(
    params: &CraneParameters<T>,
    initial: &CraneState<T>,
    cfg: &EnvelopeConfig<T>,
) -> Vec<(CraneParameters<T>, CraneState<T>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut members = vec![(*params, *initial)];
    for _ in 1..cfg.ensemble_size {
        let (mut p, mut s) = (*params, *initial);
        for which in &cfg.perturbed_parameters {
            let u: f64 = rng.random();
            let factor = T::one() + cfg.perturbation * T::lit(2.0 * u - 1.0);
            match which {
                PerturbedParameter::RopeLength => {
                    s.l = (s.l * factor).max(p.rope_length_min).min(p.rope_length_max)
                }
                PerturbedParameter::SwingDamping => p.swing_damping = p.swing_damping * factor,
                PerturbedParameter::WindGain => p.wind_gain = p.wind_gain * factor,
            }
        }
        members.push((p, s));
    }
    members
}

/// Per-sample, per-field minimum and maximum over an ensemble of
/// simulations with uniformly perturbed parameters. The nominal parameters
/// are always ensemble member 0, so the nominal trace lies inside the band.
pub fn confidence_envelope<T: Real>(
    traj: &Trajectory<T>,
    params: &CraneParameters<T>,
    initial: &CraneState<T>,
    opts: SimOptions<T>,
    cfg: &EnvelopeConfig<T>,
) -> Result<(Trace<T>, Trace<T>)> {
    cfg.validate()?;
    let mut lower: Option<Trace<T>> = None;
    let mut upper: Option<Trace<T>> = None;
    for (p, s) in ensemble_members(params, initial, cfg) {
        let trace = simulate_with(traj, &p, &s, opts)?;
        match (&mut lower, &mut upper) {
            (Some(lo), Some(hi)) => {
                for ((lo, hi), s) in lo.samples.iter_mut().zip(&mut hi.samples).zip(&trace.samples) {
                    fold_bounds(lo, hi, s);
                }
            }
            _ => {
                lower = Some(Trace {
                    kind: TraceKind::EnvelopeLower,
                    ..trace.clone()
                });
                upper = Some(Trace {
                    kind: TraceKind::EnvelopeUpper,
                    ..trace
                });
            }
        }
    }
    Ok((lower.unwrap(), upper.unwrap()))
}

fn fold_bounds<T: Real>(lo: &mut CraneState<T>, hi: &mut CraneState<T>, s: &CraneState<T>) {
    macro_rules! fold {
        ($($f:ident),*) => {$(
            lo.$f = lo.$f.min(s.$f);
            hi.$f = hi.$f.max(s.$f);
        )*};
    }
    fold!(x, v, l, l_dot, theta, theta_dot, wind);
}

/// Compares a measured trace with a simulated one.
///
/// The measured trace is linearly interpolated onto the simulated trace's
/// grid, restricted to the time range both traces cover. Each entry of
/// `checks` gives a (signal, metric) pair and its threshold.
pub fn compare_traces<T: Real>(
    measured: &Trace<T>,
    simulated: &Trace<T>,
    checks: &[(Signal, Metric, T)],
    dtw_band: usize,
) -> Result<Vec<MetricResult<T>>> {
    let (Some(m0), Some(m1), Some(s0), Some(s1)) =
        (measured.start(), measured.end(), simulated.start(), simulated.end())
    else {
        return Err(Error::domain("traces must be non-empty"));
    };
    let eps = T::lit(1e-9);
    let from = m0.max(s0);
    let to = m1.min(s1);
    if from > to + eps {
        return Err(Error::domain("traces do not overlap in time"));
    }

    let mut sim_grid = Vec::new();
    let mut meas_grid = Vec::new();
    for s in simulated.samples.iter().filter(|s| s.t >= from - eps && s.t <= to + eps) {
        if let Some(m) = measured.interpolate(s.t) {
            sim_grid.push(*s);
            meas_grid.push(m);
        }
    }
    if sim_grid.is_empty() {
        return Err(Error::domain("traces do not overlap in time"));
    }

    checks
        .iter()
        .map(|&(signal, metric, threshold)| {
            let a: Vec<T> = meas_grid.iter().map(|s| signal_of(s, signal)).collect();
            let b: Vec<T> = sim_grid.iter().map(|s| signal_of(s, signal)).collect();
            let value = match metric {
                Metric::Rmse => metrics::rmse(&a, &b)?,
                Metric::MaxDev => metrics::max_dev(&a, &b)?,
                Metric::Dtw => metrics::dtw(&a, &b, dtw_band)?,
            };
            Ok(MetricResult::new(signal, metric, value, threshold))
        })
        .collect()
}
