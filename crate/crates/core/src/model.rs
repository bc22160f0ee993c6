//! Planar cart/hoist/pendulum plant.
//!
//! The payload is a point mass on a massless rigid rope hanging from a cart.
//! Cart and hoist are kinematic: the commanded accelerations are realized
//! exactly, and only the swing angle has its own dynamics:
//!
//! ```text
//! θ̈ = −(a_cart·cosθ + g·sinθ + 2·l̇·θ̇ + a_wind·cosθ)/l − c_θ·θ̇
//! a_wind = k_w·w·|w|
//! ```
//!
//! `θ` is measured from the vertical, positive when the payload is displaced
//! toward +x. Wind acts like an additional cart acceleration, so a positive
//! wind speed pushes the payload toward −x.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Nominal physical constants and actuator limits of the crane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct CraneParameters<T> {
    pub rope_length_min: T,
    pub rope_length_max: T,
    pub cart_travel_max: T,
    pub gravity: T,
    /// Viscous swing damping `c_θ` in 1/s.
    pub swing_damping: T,
    /// Maps wind speed to an equivalent horizontal payload acceleration, 1/m.
    pub wind_gain: T,
    pub cart_v_max: T,
    pub cart_a_max: T,
    pub hoist_v_max: T,
    pub hoist_a_max: T,
}

impl<T: Real> Default for CraneParameters<T> {
    fn default() -> Self {
        Self {
            rope_length_min: T::lit(0.2),
            rope_length_max: T::lit(1.0),
            cart_travel_max: T::lit(1.0),
            gravity: T::lit(9.81),
            swing_damping: T::lit(0.5),
            wind_gain: T::lit(0.01),
            cart_v_max: T::lit(0.5),
            cart_a_max: T::lit(1.0),
            hoist_v_max: T::lit(0.2),
            hoist_a_max: T::lit(0.5),
        }
    }
}

impl<T: Real> CraneParameters<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.rope_length_min,
            self.rope_length_max,
            self.cart_travel_max,
            self.gravity,
            self.swing_damping,
            self.wind_gain,
            self.cart_v_max,
            self.cart_a_max,
            self.hoist_v_max,
            self.hoist_a_max,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("crane parameters must be finite"));
        }
        if !(self.rope_length_min > T::zero() && self.rope_length_min < self.rope_length_max) {
            return Err(Error::domain("require 0 < rope_length_min < rope_length_max"));
        }
        if self.cart_travel_max <= T::zero() {
            return Err(Error::domain("cart_travel_max must be positive"));
        }
        if self.gravity <= T::zero() {
            return Err(Error::domain("gravity must be positive"));
        }
        if self.swing_damping < T::zero() {
            return Err(Error::domain("swing_damping must be non-negative"));
        }
        let limits = [self.cart_v_max, self.cart_a_max, self.hoist_v_max, self.hoist_a_max];
        if limits.iter().any(|v| *v <= T::zero()) {
            return Err(Error::domain("rate limits must be positive"));
        }
        Ok(())
    }
}

/// Full timestamped plant state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CraneState<T> {
    pub t: T,
    /// Cart position.
    pub x: T,
    /// Cart velocity.
    pub v: T,
    /// Rope length.
    pub l: T,
    pub l_dot: T,
    /// Swing angle from vertical.
    pub theta: T,
    pub theta_dot: T,
    /// Wind speed at the payload.
    pub wind: T,
    pub magnet_on: bool,
}

impl<T: Real> CraneState<T> {
    /// Payload hanging still at cart position `x` with rope length `l`.
    pub fn at_rest(x: T, l: T) -> Self {
        Self {
            x,
            l,
            ..Self::default()
        }
    }

    /// Returns the name of the first non-finite field.
    pub fn non_finite_field(&self) -> Option<&'static str> {
        let fields = [
            ("t", self.t),
            ("x", self.x),
            ("v", self.v),
            ("l", self.l),
            ("l_dot", self.l_dot),
            ("theta", self.theta),
            ("theta_dot", self.theta_dot),
            ("wind", self.wind),
        ];
        fields
            .iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(name, _)| *name)
    }

    fn check_finite(&self) -> Result<()> {
        match self.non_finite_field() {
            Some(name) => Err(Error::NonFinite(name)),
            None => Ok(()),
        }
    }

    /// Swing energy per unit payload mass: kinetic plus potential.
    pub fn swing_energy(&self, gravity: T) -> T {
        let half = T::lit(0.5);
        let tangential = self.l * self.theta_dot;
        half * tangential * tangential + gravity * self.l * (T::one() - self.theta.cos())
    }

    fn offset(&self, d: &StateDerivative<T>, h: T) -> Self {
        Self {
            x: self.x + d.x * h,
            v: self.v + d.v * h,
            l: self.l + d.l * h,
            l_dot: self.l_dot + d.l_dot * h,
            theta: self.theta + d.theta * h,
            theta_dot: self.theta_dot + d.theta_dot * h,
            ..*self
        }
    }
}

/// Commanded axis accelerations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantInput<T> {
    pub a_cart: T,
    pub a_hoist: T,
}

impl<T: Real> PlantInput<T> {
    pub fn zero() -> Self {
        Self {
            a_cart: T::zero(),
            a_hoist: T::zero(),
        }
    }

    pub fn cart(a: T) -> Self {
        Self {
            a_cart: a,
            a_hoist: T::zero(),
        }
    }

    pub fn hoist(a: T) -> Self {
        Self {
            a_cart: T::zero(),
            a_hoist: a,
        }
    }
}

/// Time derivative of the dynamic fields of [`CraneState`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateDerivative<T> {
    pub x: T,
    pub v: T,
    pub l: T,
    pub l_dot: T,
    pub theta: T,
    pub theta_dot: T,
}

/// Continuous-time plant dynamics.
pub fn derivatives<T: Real>(
    state: &CraneState<T>,
    input: &PlantInput<T>,
    params: &CraneParameters<T>,
) -> Result<StateDerivative<T>> {
    state.check_finite()?;
    if !input.a_cart.is_finite() {
        return Err(Error::NonFinite("a_cart"));
    }
    if !input.a_hoist.is_finite() {
        return Err(Error::NonFinite("a_hoist"));
    }
    if state.l <= T::zero() {
        return Err(Error::Singularity(state.l.to_f64_lossy()));
    }

    let (sin, cos) = state.theta.sin_cos();
    let a_wind = params.wind_gain * state.wind * state.wind.abs();
    let two = T::lit(2.0);
    let theta_ddot = -(input.a_cart * cos
        + params.gravity * sin
        + two * state.l_dot * state.theta_dot
        + a_wind * cos)
        / state.l
        - params.swing_damping * state.theta_dot;

    Ok(StateDerivative {
        x: state.v,
        v: input.a_cart,
        l: state.l_dot,
        l_dot: input.a_hoist,
        theta: state.theta_dot,
        theta_dot: theta_ddot,
    })
}

/// Advances the plant by one classical Runge-Kutta step of length `dt`.
///
/// The input is held constant over the step. Cart position and rope length
/// are clamped to their travel limits afterwards, zeroing the corresponding
/// velocity when a clamp engages.
pub fn step_rk4<T: Real>(
    state: &CraneState<T>,
    input: &PlantInput<T>,
    dt: T,
    params: &CraneParameters<T>,
) -> Result<CraneState<T>> {
    if !(dt >= T::zero()) {
        return Err(Error::domain("step size must be non-negative"));
    }
    if dt == T::zero() {
        return Ok(*state);
    }

    let half = dt * T::lit(0.5);
    let k1 = derivatives(state, input, params)?;
    let k2 = derivatives(&state.offset(&k1, half), input, params)?;
    let k3 = derivatives(&state.offset(&k2, half), input, params)?;
    let k4 = derivatives(&state.offset(&k3, dt), input, params)?;

    let two = T::lit(2.0);
    let sixth = dt / T::lit(6.0);
    let combine = |a: T, b: T, c: T, d: T| sixth * (a + two * b + two * c + d);

    let mut next = CraneState {
        t: state.t + dt,
        x: state.x + combine(k1.x, k2.x, k3.x, k4.x),
        v: state.v + combine(k1.v, k2.v, k3.v, k4.v),
        l: state.l + combine(k1.l, k2.l, k3.l, k4.l),
        l_dot: state.l_dot + combine(k1.l_dot, k2.l_dot, k3.l_dot, k4.l_dot),
        theta: state.theta + combine(k1.theta, k2.theta, k3.theta, k4.theta),
        theta_dot: state.theta_dot
            + combine(k1.theta_dot, k2.theta_dot, k3.theta_dot, k4.theta_dot),
        ..*state
    };
    next.check_finite()?;

    if next.l < params.rope_length_min {
        next.l = params.rope_length_min;
        next.l_dot = T::zero();
    } else if next.l > params.rope_length_max {
        next.l = params.rope_length_max;
        next.l_dot = T::zero();
    }
    if next.x < T::zero() {
        next.x = T::zero();
        next.v = T::zero();
    } else if next.x > params.cart_travel_max {
        next.x = params.cart_travel_max;
        next.v = T::zero();
    }
    Ok(next)
}

/// Small-angle pendulum frequency `√(g/l)` in rad/s.
pub fn natural_frequency<T: Real>(l: T, params: &CraneParameters<T>) -> Result<T> {
    if !l.is_finite() || l <= T::zero() {
        return Err(Error::domain(format!("rope length must be positive, got {l}")));
    }
    Ok((params.gravity / l).sqrt())
}
