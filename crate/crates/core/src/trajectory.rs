//! Rest-to-rest motion profiles for the cart and hoist axes.
//!
//! Profiles are built from piecewise-constant accelerations on the sampling
//! grid, so a plant that holds each cell's acceleration for one step
//! reproduces the waypoint positions exactly. Waypoint `k` stores the
//! acceleration of the cell `[t_k, t_k+dt)`; the first and last waypoints
//! report zero acceleration since the axis is at rest there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{natural_frequency, CraneParameters, PlantInput};
use crate::scalar::Real;

/// Slack used when snapping continuous switching times onto the grid.
const GRID_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Cart,
    Hoist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    #[serde(alias = "trap")]
    Trapezoid,
    #[serde(alias = "zv")]
    ZvShaped,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Waypoint<T> {
    pub t: T,
    pub pos: T,
    pub vel: T,
    pub acc: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub id: String,
    pub axis: Axis,
    pub mode: ProfileMode,
    pub dt: T,
    pub waypoints: Vec<Waypoint<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_rope_length: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping_ratio: Option<T>,
}

/// Two-impulse zero-vibration shaper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZvShaper<T> {
    pub amplitudes: [T; 2],
    /// Time between the two impulses: half the damped swing period.
    pub delay: T,
}

fn new_id() -> String {
    uuid::Uuid::new_v4().to_string()
}

fn check_finite<T: Real>(values: &[(&str, T)]) -> Result<()> {
    match values.iter().find(|(_, v)| !v.is_finite()) {
        Some((name, v)) => Err(Error::domain(format!("{name} must be finite, got {v}"))),
        None => Ok(()),
    }
}

fn grid_cells<T: Real>(duration: T, dt: T) -> usize {
    let n = (duration / dt - T::lit(GRID_SLACK)).ceil();
    n.to_usize().unwrap_or(0)
}

/// Cell accelerations of a grid-aligned trapezoid over a positive distance.
///
/// Phase durations are rounded up to whole cells and the cruise velocity and
/// acceleration are then recomputed to land exactly on the target, which can
/// only lower them.
fn trapezoid_cells<T: Real>(distance: T, v_max: T, a_max: T, dt: T) -> Vec<T> {
    let full_ramp = v_max * v_max / a_max;
    let (t_acc, t_cruise) = if distance < full_ramp {
        ((distance / a_max).sqrt(), T::zero())
    } else {
        (v_max / a_max, (distance - full_ramp) / v_max)
    };
    let n_acc = grid_cells(t_acc, dt).max(1);
    let n_cruise = grid_cells(t_cruise, dt);
    let cruise_v = distance / (T::from_usize(n_acc + n_cruise).unwrap() * dt);
    let accel = cruise_v / (T::from_usize(n_acc).unwrap() * dt);

    let mut cells = Vec::with_capacity(2 * n_acc + n_cruise);
    cells.extend(std::iter::repeat_n(accel, n_acc));
    cells.extend(std::iter::repeat_n(T::zero(), n_cruise));
    cells.extend(std::iter::repeat_n(-accel, n_acc));
    cells
}

/// Integrates cell accelerations into waypoints.
fn waypoints_from_cells<T: Real>(p0: T, cells: &[T], dt: T) -> Vec<Waypoint<T>> {
    let half_dt2 = T::lit(0.5) * dt * dt;
    let mut out = Vec::with_capacity(cells.len() + 1);
    let (mut pos, mut vel) = (p0, T::zero());
    for (k, &a) in cells.iter().enumerate() {
        out.push(Waypoint {
            t: T::from_usize(k).unwrap() * dt,
            pos,
            vel,
            acc: if k == 0 { T::zero() } else { a },
        });
        pos = pos + vel * dt + a * half_dt2;
        vel = vel + a * dt;
    }
    out.push(Waypoint {
        t: T::from_usize(cells.len()).unwrap() * dt,
        pos,
        vel: T::zero(),
        acc: T::zero(),
    });
    out
}

fn check_plan_args<T: Real>(p0: T, p1: T, v_max: T, a_max: T, dt: T) -> Result<()> {
    check_finite(&[("p0", p0), ("p1", p1), ("v_max", v_max), ("a_max", a_max), ("dt", dt)])?;
    if v_max <= T::zero() || a_max <= T::zero() {
        return Err(Error::domain("v_max and a_max must be positive"));
    }
    if dt <= T::zero() {
        return Err(Error::domain("dt must be positive"));
    }
    Ok(())
}

fn signed_trapezoid<T: Real>(p0: T, p1: T, v_max: T, a_max: T, dt: T) -> Vec<T> {
    let distance = p1 - p0;
    if distance == T::zero() {
        return Vec::new();
    }
    let sign = distance.signum();
    trapezoid_cells(distance.abs(), v_max, a_max, dt)
        .into_iter()
        .map(|a| a * sign)
        .collect()
}

/// Time-optimal rest-to-rest trapezoidal (or triangular) profile on the
/// `dt` grid.
pub fn plan_trapezoid<T: Real>(p0: T, p1: T, v_max: T, a_max: T, dt: T) -> Result<Trajectory<T>> {
    check_plan_args(p0, p1, v_max, a_max, dt)?;
    let cells = signed_trapezoid(p0, p1, v_max, a_max, dt);
    Ok(Trajectory {
        id: new_id(),
        axis: Axis::Cart,
        mode: ProfileMode::Trapezoid,
        dt,
        waypoints: waypoints_from_cells(p0, &cells, dt),
        design_rope_length: None,
        damping_ratio: None,
    })
}

/// Designs the ZV shaper for rope length `l` and damping ratio `zeta`.
pub fn zv_impulses<T: Real>(l: T, zeta: T, params: &CraneParameters<T>) -> Result<ZvShaper<T>> {
    if !zeta.is_finite() || zeta < T::zero() || zeta >= T::one() {
        return Err(Error::domain(format!("damping ratio must lie in [0, 1), got {zeta}")));
    }
    let omega = natural_frequency(l, params)?;
    let root = (T::one() - zeta * zeta).sqrt();
    let k = (-zeta * T::PI() / root).exp();
    let a1 = T::one() / (T::one() + k);
    // 1 - a1 is exact for a1 in [0.5, 1], so the amplitudes sum to exactly one.
    let a2 = T::one() - a1;
    Ok(ZvShaper {
        amplitudes: [a1, a2],
        delay: T::PI() / (omega * root),
    })
}

/// Convolves grid-aligned cell accelerations with the shaper impulses.
///
/// A delay that falls between grid points is split across the two
/// neighbouring cell shifts, which is the exact cell average of the
/// continuously delayed profile.
fn shape_cells<T: Real>(base: &[T], shaper: &ZvShaper<T>, dt: T) -> Vec<T> {
    let steps = shaper.delay / dt;
    let mut whole = steps.floor();
    let mut frac = steps - whole;
    if frac < T::lit(GRID_SLACK) {
        frac = T::zero();
    } else if frac > T::one() - T::lit(GRID_SLACK) {
        whole = whole + T::one();
        frac = T::zero();
    }
    let shift = whole.to_usize().unwrap_or(0);
    let len = base.len() + shift + usize::from(frac > T::zero());
    let [a1, a2] = shaper.amplitudes;
    let at = |i: isize| -> T {
        if i < 0 || i as usize >= base.len() {
            T::zero()
        } else {
            base[i as usize]
        }
    };
    (0..len)
        .map(|k| {
            let k = k as isize;
            let lagged = (T::one() - frac) * at(k - shift as isize) + frac * at(k - shift as isize - 1);
            a1 * at(k) + a2 * lagged
        })
        .collect()
}

/// Zero-vibration shaped rest-to-rest profile for a pendulum of length `l`.
///
/// The amplitudes of the two impulses sum to one, so the shaped acceleration
/// and velocity are convex combinations of the baseline's and stay within
/// `a_max` and `v_max` without rescaling the baseline.
#[allow(clippy::too_many_arguments)]
pub fn plan_zv_shaped<T: Real>(
    p0: T,
    p1: T,
    v_max: T,
    a_max: T,
    l: T,
    zeta: T,
    dt: T,
    params: &CraneParameters<T>,
) -> Result<Trajectory<T>> {
    check_plan_args(p0, p1, v_max, a_max, dt)?;
    let shaper = zv_impulses(l, zeta, params)?;
    let base = signed_trapezoid(p0, p1, v_max, a_max, dt);
    let cells = if base.is_empty() {
        base
    } else {
        shape_cells(&base, &shaper, dt)
    };
    Ok(Trajectory {
        id: new_id(),
        axis: Axis::Cart,
        mode: ProfileMode::ZvShaped,
        dt,
        waypoints: waypoints_from_cells(p0, &cells, dt),
        design_rope_length: Some(l),
        damping_ratio: Some(zeta),
    })
}

impl<T: Real> Trajectory<T> {
    pub fn with_axis(mut self, axis: Axis) -> Self {
        self.axis = axis;
        self
    }

    pub fn start_time(&self) -> T {
        self.waypoints.first().map_or(T::zero(), |w| w.t)
    }

    pub fn duration(&self) -> T {
        match (self.waypoints.first(), self.waypoints.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => T::zero(),
        }
    }

    pub fn final_position(&self) -> Option<T> {
        self.waypoints.last().map(|w| w.pos)
    }

    /// Number of acceleration cells between waypoints.
    pub fn num_cells(&self) -> usize {
        self.waypoints.len().saturating_sub(1)
    }

    /// Acceleration held over cell `k`, recovered from the velocity setpoints.
    pub fn cell_acceleration(&self, k: usize) -> T {
        match (self.waypoints.get(k), self.waypoints.get(k + 1)) {
            (Some(a), Some(b)) => (b.vel - a.vel) / (b.t - a.t),
            _ => T::zero(),
        }
    }

    /// Plant input realizing cell `k` on this trajectory's axis.
    pub fn input_for_cell(&self, k: usize) -> PlantInput<T> {
        let a = self.cell_acceleration(k);
        match self.axis {
            Axis::Cart => PlantInput::cart(a),
            Axis::Hoist => PlantInput::hoist(a),
        }
    }

    /// Appends rest waypoints so the profile lasts at least `extra` longer.
    pub fn with_hold(mut self, extra: T) -> Self {
        let Some(last) = self.waypoints.last().copied() else {
            return self;
        };
        let cells = grid_cells(extra, self.dt);
        let first = self.num_cells();
        for i in 1..=cells {
            self.waypoints.push(Waypoint {
                t: T::from_usize(first + i).unwrap() * self.dt + self.start_time(),
                pos: last.pos,
                vel: T::zero(),
                acc: T::zero(),
            });
        }
        self
    }

    /// Checks the structural invariants of a trajectory received from
    /// elsewhere.
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) {
            return Err(Error::domain("trajectory dt must be positive"));
        }
        let (Some(first), Some(last)) = (self.waypoints.first(), self.waypoints.last()) else {
            return Err(Error::domain("trajectory has no waypoints"));
        };
        for w in &self.waypoints {
            check_finite(&[("t", w.t), ("pos", w.pos), ("vel", w.vel), ("acc", w.acc)])?;
        }
        if self.waypoints.windows(2).any(|p| p[1].t < p[0].t) {
            return Err(Error::domain("waypoint times must be non-decreasing"));
        }
        if first.vel != T::zero() || last.vel != T::zero() {
            return Err(Error::domain("trajectory must start and end at rest"));
        }
        Ok(())
    }
}

/// Resamples onto a grid of spacing `dt_new`, interpolating position and
/// velocity linearly and holding acceleration. Both endpoints are kept
/// exactly; the final interval is shorter when the duration is not a whole
/// number of new steps.
pub fn resample<T: Real>(traj: &Trajectory<T>, dt_new: T) -> Result<Trajectory<T>> {
    if !dt_new.is_finite() || dt_new <= T::zero() {
        return Err(Error::domain("dt_new must be positive"));
    }
    let (Some(first), Some(last)) = (traj.waypoints.first(), traj.waypoints.last()) else {
        return Err(Error::domain("cannot resample an empty trajectory"));
    };
    let duration = last.t - first.t;
    let steps = grid_cells(duration, dt_new);
    let n = traj.waypoints.len();

    let mut waypoints = Vec::with_capacity(steps + 1);
    waypoints.push(*first);
    for j in 1..steps {
        let t = first.t + T::from_usize(j).unwrap() * dt_new;
        let s = (t - first.t) / traj.dt;
        let mut i = s.floor().to_usize().unwrap_or(0).min(n - 1);
        let mut frac = s - T::from_usize(i).unwrap();
        if frac > T::one() - T::lit(1e-9) && i + 1 < n {
            i += 1;
            frac = T::zero();
        }
        let a = traj.waypoints[i];
        let w = if frac < T::lit(1e-9) || i + 1 >= n {
            Waypoint { t, ..a }
        } else {
            let b = traj.waypoints[i + 1];
            Waypoint {
                t,
                pos: a.pos + (b.pos - a.pos) * frac,
                vel: a.vel + (b.vel - a.vel) * frac,
                acc: a.acc,
            }
        };
        waypoints.push(w);
    }
    if steps > 0 {
        waypoints.push(*last);
    }

    Ok(Trajectory {
        id: new_id(),
        dt: dt_new,
        waypoints,
        ..traj.clone()
    })
}
