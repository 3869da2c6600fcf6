//! Conversion of locally sensed target states and lane-marking polynomials
//! into lane-relative Frenet states.
//!
//! Lane markings are cubic polynomials in the local Cartesian frame. They are
//! locally linearized around the vehicle's longitudinal position before the
//! lateral distance is measured; for the curvatures encountered on highways
//! the linearization error stays below the lateral measurement accuracy
//! (0.05 m is the tolerance constant used by the tests).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traj::FrenetState;

/// Tracked state of a surrounding vehicle in the local Cartesian frame.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TargetState {
    pub x: f64,
    pub y: f64,
    /// Relative heading, rad.
    pub theta: f64,
    /// Absolute velocity, m/s, non-negative.
    pub v: f64,
}

/// Cubic lane-marking polynomial y(x) = c3 x^3 + c2 x^2 + c1 x + c0.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LaneMarking {
    pub c3: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl LaneMarking {
    pub fn eval(&self, x: f64) -> f64 {
        ((self.c3 * x + self.c2) * x + self.c1) * x + self.c0
    }

    pub fn slope(&self, x: f64) -> f64 {
        (3.0 * self.c3 * x + 2.0 * self.c2) * x + self.c1
    }
}

/// The pair of markings bounding the vehicle's current lane.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LaneAssignment {
    pub left: LaneMarking,
    pub right: LaneMarking,
    pub lane_id: i32,
}

/// Signed perpendicular distance from the vehicle to the marking's tangent
/// line at the vehicle's x, positive when the vehicle is left of the marking.
pub fn signed_marking_distance(state: &TargetState, marking: &LaneMarking) -> Result<f64> {
    if state.x < marking.x_min || state.x > marking.x_max {
        return Err(Error::MarkingRangeExceeded {
            x: state.x,
            x_min: marking.x_min,
            x_max: marking.x_max,
        });
    }
    let y0 = marking.eval(state.x);
    let m = marking.slope(state.x);
    Ok((state.y - y0) / (1.0 + m * m).sqrt())
}

/// Lateral offset from the lane centerline, d = (d_l + d_r) / 2.
///
/// The lane width enters inherently through the two signed distances.
pub fn lateral_offset(d_left: f64, d_right: f64) -> f64 {
    0.5 * (d_left + d_right)
}

/// Traveled distance update under a constant velocity model:
/// s_new = s_prev + mean(v_prev, v) * dt.
pub fn accumulate_s(prev: &FrenetState, v: f64, dt: f64) -> f64 {
    prev.s + 0.5 * (prev.s_dot + v) * dt
}

/// Transforms a target state into the Frenet frame of its assigned lane.
///
/// `d_dot` is left at 0 here; the caller maintains the low-pass difference
/// history over the resulting d series (see [`crate::traj::lowpass_diff`]).
pub fn to_frenet(
    state: &TargetState,
    lanes: &LaneAssignment,
    prev: Option<&FrenetState>,
    dt: f64,
    t: f64,
) -> Result<FrenetState> {
    let d_l = signed_marking_distance(state, &lanes.left)?;
    let d_r = signed_marking_distance(state, &lanes.right)?;
    let d = lateral_offset(d_l, d_r);
    let s = match prev {
        Some(p) => accumulate_s(p, state.v, dt),
        None => 0.0,
    };
    Ok(FrenetState {
        t,
        s,
        s_dot: state.v,
        d,
        d_dot: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn marking(c3: f64, c2: f64, c1: f64, c0: f64) -> LaneMarking {
        LaneMarking {
            c3,
            c2,
            c1,
            c0,
            x_min: -100.0,
            x_max: 200.0,
        }
    }

    fn target(x: f64, y: f64) -> TargetState {
        TargetState {
            x,
            y,
            theta: 0.0,
            v: 0.0,
        }
    }

    /// Brute-force nearest-point distance to a densely sampled cubic.
    fn dense_nearest(state: &TargetState, m: &LaneMarking) -> f64 {
        let mut best = f64::INFINITY;
        let mut x = state.x - 30.0;
        while x <= state.x + 30.0 {
            let dy = state.y - m.eval(x);
            let dx = state.x - x;
            best = best.min((dx * dx + dy * dy).sqrt());
            x += 1e-3;
        }
        best
    }

    #[test]
    fn straight_marking_distance() {
        let m = marking(0.0, 0.0, 0.0, 0.0);
        let d = signed_marking_distance(&target(10.0, 1.5), &m).unwrap();
        assert_abs_diff_eq!(d, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn diagonal_marking_distance() {
        let m = marking(0.0, 0.0, 1.0, 0.0);
        let d = signed_marking_distance(&target(0.0, 1.0), &m).unwrap();
        assert_abs_diff_eq!(d, 1.0 / 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn cubic_marking_matches_dense_oracle() {
        let m = marking(1e-5, 0.0, 0.0, 0.0);
        let st = target(20.0, m.eval(20.0) + 1.0);
        let d = signed_marking_distance(&st, &m).unwrap();
        let oracle = dense_nearest(&st, &m);
        assert!((d.abs() - oracle).abs() < 1e-3, "lin {d} vs oracle {oracle}");
    }

    #[test]
    fn marking_range_error() {
        let mut m = marking(0.0, 0.0, 0.0, 0.0);
        m.x_max = 5.0;
        assert!(matches!(
            signed_marking_distance(&target(10.0, 0.0), &m),
            Err(Error::MarkingRangeExceeded { .. })
        ));
    }

    #[test]
    fn lateral_offset_cases() {
        assert_abs_diff_eq!(lateral_offset(-1.8, 1.8), 0.0);
        assert_abs_diff_eq!(lateral_offset(-1.0, 2.6), 0.8);
        assert_abs_diff_eq!(lateral_offset(0.0, 3.6), 1.8);
    }

    #[test]
    fn lateral_offset_shift_linearity() {
        let base = lateral_offset(-1.2, 2.4);
        for c in [-0.7, 0.3, 1.9] {
            assert_abs_diff_eq!(lateral_offset(-1.2 + c, 2.4 + c), base + c, epsilon = 1e-12);
        }
    }

    #[test]
    fn accumulate_s_constant_velocity() {
        let prev = FrenetState {
            t: 0.0,
            s: 0.0,
            s_dot: 30.0,
            d: 0.0,
            d_dot: 0.0,
        };
        assert_abs_diff_eq!(accumulate_s(&prev, 30.0, 0.04), 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(accumulate_s(&prev, 0.0, 0.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn accumulate_s_trapezoid_matches_analytic_ramp() {
        // v ramps 0 -> 10 m/s over 1 s at 25 Hz; s should be ~ 0.5 a t^2 = 5 m
        let dt = 0.04;
        let mut state = FrenetState {
            t: 0.0,
            s: 0.0,
            s_dot: 0.0,
            d: 0.0,
            d_dot: 0.0,
        };
        for k in 1..=25 {
            let v = 10.0 * k as f64 * dt;
            state.s = accumulate_s(&state, v, dt);
            state.s_dot = v;
        }
        assert!((state.s - 5.0).abs() < 0.01, "s = {}", state.s);
    }

    #[test]
    fn to_frenet_centerline_and_offset() {
        let lanes = LaneAssignment {
            left: marking(0.0, 0.0, 0.0, 1.8),
            right: marking(0.0, 0.0, 0.0, -1.8),
            lane_id: 0,
        };
        let st = TargetState {
            x: 10.0,
            y: 0.0,
            theta: 0.0,
            v: 25.0,
        };
        let f = to_frenet(&st, &lanes, None, 0.04, 0.0).unwrap();
        assert_abs_diff_eq!(f.d, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.s_dot, 25.0, epsilon = 1e-12);

        let st2 = TargetState { y: 0.5, ..st };
        let f2 = to_frenet(&st2, &lanes, None, 0.04, 0.0).unwrap();
        assert_abs_diff_eq!(f2.d, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_curvature_linearization_is_exact() {
        // For straight markings of any slope the tangent IS the marking, so
        // the linearized distance equals the exact perpendicular distance.
        let m = marking(0.0, 0.0, 0.3, -1.0);
        let st = target(7.0, 2.0);
        let lin = signed_marking_distance(&st, &m).unwrap();
        let oracle = dense_nearest(&st, &m);
        assert_abs_diff_eq!(lin.abs(), oracle, epsilon = 1e-6);
    }

    #[test]
    fn curved_lane_drift_within_error_bound() {
        // |c2| <= 1e-3, |c3| <= 1e-5, |d| <= 2 m: linearized distance deviates
        // from the dense projection oracle by at most 0.05 m.
        let m = marking(1e-5, 1e-3, 0.0, 0.0);
        for (x, off) in [(0.0, 0.5), (15.0, -1.5), (30.0, 2.0), (45.0, -0.3)] {
            // place the vehicle off the curve along the local normal
            let slope = m.slope(x);
            let norm = (1.0 + slope * slope).sqrt();
            let st = target(x - off * slope / norm, m.eval(x) + off / norm);
            let lin = signed_marking_distance(&st, &m).unwrap();
            let oracle = dense_nearest(&st, &m);
            assert!(
                (lin.abs() - oracle).abs() <= 0.05,
                "x={x} off={off}: lin {lin} oracle {oracle}"
            );
        }
    }
}
