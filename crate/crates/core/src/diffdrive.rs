//! Differential-drive adapter: maps a planar velocity command to linear and
//! angular velocity inputs, and integrates the unicycle model.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::VecN;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub v_max: f64,
    pub omega_max: f64,
    pub k_v: f64,
    pub p: u32,
}

impl Default for DriveParams {
    /// TurtleBot 4 settings.
    fn default() -> Self {
        Self {
            v_max: 0.31,
            omega_max: 1.9,
            k_v: 0.1,
            p: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnicycleState {
    pub x: VecN,
    pub heading: f64,
}

/// Wraps an angle into `(-π, π]`; odd multiples of `π` map to `+π`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w == -PI {
        PI
    } else {
        w
    }
}

/// `(v, ω)` for command `u` at heading `heading`.
pub fn adapt(u: &VecN, heading: f64, params: &DriveParams) -> (f64, f64) {
    let norm = u.norm();
    if norm == 0.0 {
        return (0.0, 0.0);
    }
    let dphi = wrap_angle(u[1].atan2(u[0]) - heading);
    let half = dphi / 2.0;
    let v = params
        .v_max
        .min(params.k_v * norm * half.cos().powi(2 * params.p as i32));
    (v, params.omega_max * half.sin())
}

/// One classical RK4 step of `ẋ = v (cos Φ, sin Φ)`, `Φ̇ = ω` with constant
/// inputs.
pub fn unicycle_step(state: &UnicycleState, v: f64, omega: f64, dt: f64) -> UnicycleState {
    let f = |phi: f64| (v * phi.cos(), v * phi.sin());
    let phi = state.heading;
    let k1 = f(phi);
    let k2 = f(phi + 0.5 * dt * omega);
    let k3 = k2;
    let k4 = f(phi + dt * omega);
    let mut x = state.x.clone();
    x[0] += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
    x[1] += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    UnicycleState {
        x,
        heading: wrap_angle(phi + dt * omega),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec_of;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn adapt_examples() {
        let p = DriveParams::default();
        let (v, w) = adapt(&vec_of(&[2.0, 0.0]), 0.0, &p);
        assert_abs_diff_eq!(v, 0.2, epsilon = 1e-15);
        assert_eq!(w, 0.0);
        let (v, w) = adapt(&vec_of(&[-1.0, 0.0]), 0.0, &p);
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w, p.omega_max);
        assert_eq!(adapt(&vec_of(&[0.0, 0.0]), 1.0, &p), (0.0, 0.0));
    }

    #[test]
    fn wrap_convention() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-0.5), -0.5);
    }

    #[test]
    fn unicycle_examples() {
        let s = UnicycleState {
            x: vec_of(&[0.0, 0.0]),
            heading: 0.0,
        };
        let n = unicycle_step(&s, 1.0, 0.0, 1.0);
        assert_abs_diff_eq!(n.x, vec_of(&[1.0, 0.0]), epsilon = 1e-15);
        let n = unicycle_step(&s, 0.0, 1.0, PI);
        assert_abs_diff_eq!(n.heading, PI, epsilon = 1e-12);
        assert_abs_diff_eq!(n.x, vec_of(&[0.0, 0.0]));
    }

    #[test]
    fn unicycle_follows_circle() {
        // v = ω = 1: exact solution (sin t, 1 - cos t)
        let mut s = UnicycleState {
            x: vec_of(&[0.0, 0.0]),
            heading: 0.0,
        };
        let dt = 1e-3;
        let steps = 1500;
        for _ in 0..steps {
            s = unicycle_step(&s, 1.0, 1.0, dt);
        }
        let t = dt * steps as f64;
        assert_abs_diff_eq!(s.x, vec_of(&[t.sin(), 1.0 - t.cos()]), epsilon = 1e-12);
        assert_abs_diff_eq!((&s.x - vec_of(&[0.0, 1.0])).norm(), 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn saturation_and_monotonicity(
            ux in -50.0f64..50.0, uy in -50.0f64..50.0, phi in -PI..PI, a in 0.0f64..PI, b in 0.0f64..PI
        ) {
            let p = DriveParams::default();
            let u = vec_of(&[ux, uy]);
            let (v, w) = adapt(&u, phi, &p);
            prop_assert!(v.abs() <= p.v_max && w.abs() <= p.omega_max);

            // v is nonincreasing in |ΔΦ| at fixed ‖u‖
            let n = u.norm();
            let at = |d: f64| adapt(&vec_of(&[n * d.cos(), n * d.sin()]), 0.0, &p).0;
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(at(hi) <= at(lo) + 1e-15);

            let dphi = wrap_angle(uy.atan2(ux) - phi);
            if n > 0.0 && dphi != 0.0 && dphi != PI {
                prop_assert_eq!(w.signum(), dphi.signum());
            }
        }
    }
}
