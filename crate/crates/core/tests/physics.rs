use crane_twin_core::*;
use proptest::prelude::*;

fn free_swing(l: f64, theta0: f64, damping: f64, dt: f64, duration: f64) -> Vec<CraneState> {
    let p = CraneParameters {
        swing_damping: damping,
        ..Default::default()
    };
    let mut s = CraneState::at_rest(0.5, l);
    s.theta = theta0;
    let n = (duration / dt).round() as usize;
    let mut out = Vec::with_capacity(n + 1);
    out.push(s);
    for _ in 0..n {
        s = step_rk4(&s, &PlantInput::zero(), dt, &p).unwrap();
        out.push(s);
    }
    out
}

/// Times of downward zero crossings of theta, linearly interpolated.
fn downward_crossings(trace: &[CraneState]) -> Vec<f64> {
    trace
        .windows(2)
        .filter(|w| w[0].theta > 0.0 && w[1].theta <= 0.0)
        .map(|w| w[0].t + (w[1].t - w[0].t) * w[0].theta / (w[0].theta - w[1].theta))
        .collect()
}

#[test]
fn small_angle_period_matches_analytic() {
    for l in [0.3, 0.5, 0.8] {
        let trace = free_swing(l, 0.05, 0.0, 1e-3, 10.0);
        let crossings = downward_crossings(&trace);
        assert!(crossings.len() >= 3);
        let analytic = 2.0 * std::f64::consts::PI * (l / 9.81).sqrt();
        for pair in crossings.windows(2) {
            let period = pair[1] - pair[0];
            assert!(
                (period - analytic).abs() / analytic < 0.01,
                "l={l}: period {period} vs {analytic}"
            );
        }
    }
    let analytic = 2.0 * std::f64::consts::PI * (0.5f64 / 9.81).sqrt();
    assert!((analytic - 1.4185).abs() < 1e-4);
}

#[test]
fn damped_swing_energy_never_increases() {
    let p = CraneParameters::default();
    for &(l, theta0, damping) in &[(0.5, 0.05, 0.2), (0.3, 0.6, 0.05), (0.9, 0.2, 1.0)] {
        let trace = free_swing(l, theta0, damping, 1e-3, 10.0);
        for w in trace.windows(2) {
            let e0 = w[0].swing_energy(p.gravity);
            let e1 = w[1].swing_energy(p.gravity);
            assert!(e1 <= e0 + 1e-9, "energy rose {e0} -> {e1} at t={}", w[1].t);
        }
        let first = trace[0].swing_energy(p.gravity);
        let last = trace.last().unwrap().swing_energy(p.gravity);
        assert!(last < first);
    }
}

fn observed_order(l: f64, theta0: f64, damping: f64) -> f64 {
    let reference = *free_swing(l, theta0, damping, 1e-5, 2.0).last().unwrap();
    let err = |dt: f64| {
        let s = *free_swing(l, theta0, damping, dt, 2.0).last().unwrap();
        (s.theta - reference.theta)
            .abs()
            .max((s.theta_dot - reference.theta_dot).abs())
    };
    (err(1e-3) / err(5e-4)).log2()
}

#[test]
fn rk4_convergence_order() {
    for &(l, theta0, damping) in &[(0.5, 0.05, 0.0), (0.3, 0.3, 0.2), (0.2, 1.0, 0.5)] {
        let order = observed_order(l, theta0, damping);
        assert!(order >= 3.8, "order {order} for l={l} theta0={theta0}");
    }
}

#[test]
fn stepping_is_bit_deterministic() {
    let a = free_swing(0.4, 0.2, 0.1, 1e-3, 1.0);
    let b = free_swing(0.4, 0.2, 0.1, 1e-3, 1.0);
    assert!(a
        .iter()
        .zip(&b)
        .all(|(x, y)| x.theta.to_bits() == y.theta.to_bits()
            && x.theta_dot.to_bits() == y.theta_dot.to_bits()));
}

proptest! {
    #[test]
    fn mirror_symmetry(
        theta in -1.0f64..1.0,
        theta_dot in -2.0f64..2.0,
        a_cart in -1.0f64..1.0,
        a_hoist in -0.5f64..0.5,
        wind in -3.0f64..3.0,
        l in 0.2f64..1.0,
        l_dot in -0.2f64..0.2,
    ) {
        let p = CraneParameters::default();
        let s = CraneState { l, l_dot, theta, theta_dot, wind, ..CraneState::at_rest(0.5, l) };
        let m = CraneState { theta: -theta, theta_dot: -theta_dot, wind: -wind, ..s };
        let d = derivatives(&s, &PlantInput { a_cart, a_hoist }, &p).unwrap();
        let dm = derivatives(&m, &PlantInput { a_cart: -a_cart, a_hoist }, &p).unwrap();
        prop_assert_eq!(dm.theta, -d.theta);
        prop_assert_eq!(dm.theta_dot, -d.theta_dot);
        prop_assert_eq!(dm.l, d.l);
        prop_assert_eq!(dm.l_dot, d.l_dot);
    }

    #[test]
    fn equilibrium_exact(x in 0.0f64..1.0, l in 0.2f64..1.0, damping in 0.0f64..2.0) {
        let p = CraneParameters { swing_damping: damping, ..Default::default() };
        let d = derivatives(&CraneState::at_rest(x, l), &PlantInput::zero(), &p).unwrap();
        prop_assert_eq!(d, StateDerivative::default());
    }

    #[test]
    fn frequency_monotone(l1 in 0.01f64..5.0, l2 in 0.01f64..5.0) {
        prop_assume!(l1 < l2);
        let p = CraneParameters::default();
        prop_assert!(natural_frequency(l1, &p).unwrap() > natural_frequency(l2, &p).unwrap());
    }
}
