//! Automatic segmentation of Frenet trajectories into LCL / LK / LCR
//! intervals.
//!
//! The raw lateral offset is relative to the *current* lane and jumps by one
//! lane width whenever the assigned lane switches at a marker crossing. The
//! labeling stage first stitches these jumps back into a continuous lateral
//! course, then smooths it with a least-squares cubic B-spline to obtain a
//! clean lateral velocity estimate, and finally places maneuver bounds where
//! the absolute lateral velocity crosses the 0.2 m/s threshold.

use serde::{Deserialize, Serialize};

use crate::bspline::BSplineCurve;
use crate::error::{Error, Result};
use crate::traj::{
    resample_uniform, Dataset, FrenetState, LateralTrack, ManeuverKind, ManeuverLabel,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelingParams {
    /// Lateral velocity threshold bounding a maneuver, m/s.
    pub velocity_threshold: f64,
    /// Lane width, meters.
    pub lane_width: f64,
    /// Maneuvers shorter than this are discarded as artifacts, seconds.
    pub min_duration: f64,
    /// Spacing of interior spline knots for the smoothing fit, seconds.
    pub knot_spacing: f64,
    /// Sample period, seconds.
    pub dt: f64,
}

impl Default for LabelingParams {
    fn default() -> Self {
        LabelingParams {
            velocity_threshold: 0.2,
            lane_width: 3.6,
            min_duration: 0.5,
            knot_spacing: 0.5,
            dt: 0.04,
        }
    }
}

/// One detected lane-change maneuver with its bookkeeping.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ManeuverSegment {
    pub kind: ManeuverKind,
    pub t_start: f64,
    pub t_end: f64,
    /// Marker-crossing time.
    pub t_cross: f64,
    /// Centerline offset of the starting lane in the stitched frame.
    pub ref_before: f64,
}

/// Per-trajectory labeling result.
#[derive(Debug, Clone)]
pub struct LabelingOutcome {
    pub labels: Vec<ManeuverLabel>,
    pub maneuvers: Vec<ManeuverSegment>,
    /// Stitched continuous lateral course on the uniform grid (raw d).
    pub stitched: LateralTrack,
    /// B-spline smoothed course with analytic lateral velocity.
    pub smoothed: LateralTrack,
    /// Reference centerline offset per sample of `stitched`.
    pub ref_offsets: Vec<f64>,
    /// Events discarded as degenerate.
    pub discarded: usize,
}

/// Reconstructs a continuous lateral course from a current-lane-relative
/// series by undoing the ±lane-width jumps at lane switches. Returns the
/// continuous track and the per-sample reference offset (d_continuous -
/// offset = current-lane d).
pub fn stitch_lateral(track: &LateralTrack, lane_width: f64) -> (LateralTrack, Vec<f64>) {
    let mut offset = 0.0;
    let mut d = Vec::with_capacity(track.len());
    let mut offsets = Vec::with_capacity(track.len());
    for k in 0..track.len() {
        if k > 0 {
            let jump = track.d[k] - track.d[k - 1];
            if jump.abs() > 0.5 * lane_width {
                offset -= (jump / lane_width).round() * lane_width;
            }
        }
        d.push(track.d[k] + offset);
        offsets.push(offset);
    }
    (
        LateralTrack {
            t0: track.t0,
            dt: track.dt,
            d,
            d_dot: track.d_dot.clone(),
        },
        offsets,
    )
}

/// Replaces the lateral position course by a least-squares cubic B-spline
/// approximation and the lateral velocity by its analytic derivative.
pub fn smooth_lateral(track: &LateralTrack, knot_spacing: f64) -> Result<LateralTrack> {
    let degree = 3;
    if track.len() < degree + 1 {
        return Err(Error::TrackTooShort {
            len: track.len(),
            min: degree + 1,
        });
    }
    let duration = track.duration();
    // interior knots every `knot_spacing` seconds, capped so the fit stays
    // overdetermined
    let mut n_interior = if duration > knot_spacing {
        (duration / knot_spacing) as usize - 1
    } else {
        0
    };
    let max_ctrl = track.len().saturating_sub(1).max(degree + 1);
    while n_interior + degree + 1 > max_ctrl && n_interior > 0 {
        n_interior -= 1;
    }
    let mut knots = vec![0.0; degree + 1];
    for j in 1..=n_interior {
        knots.push(j as f64 / (n_interior + 1) as f64);
    }
    knots.extend(vec![1.0; degree + 1]);
    let n_ctrl = knots.len() - degree - 1;

    // least-squares basis fit over normalized time
    let curve_proto = BSplineCurve {
        degree,
        knots,
        ctrl: vec![0.0; n_ctrl],
    };
    let rows = track.len();
    let a = nalgebra::DMatrix::from_fn(rows, n_ctrl, |r, c| {
        let u = if duration > 0.0 {
            r as f64 * track.dt / duration
        } else {
            0.0
        };
        let mut unit = curve_proto.clone();
        unit.ctrl[c] = 1.0;
        unit.eval(u.min(1.0)).unwrap_or(0.0)
    });
    let b = nalgebra::DVector::from_column_slice(&track.d);
    let svd = a.svd(true, true);
    let sol = svd.solve(&b, 1e-12).map_err(|e| Error::Other(e.to_string()))?;
    let mut curve = curve_proto;
    curve.ctrl = sol.iter().copied().collect();
    let dcurve = curve.derivative(1)?;

    let mut d = Vec::with_capacity(track.len());
    let mut d_dot = Vec::with_capacity(track.len());
    for r in 0..track.len() {
        let u = if duration > 0.0 {
            (r as f64 * track.dt / duration).min(1.0)
        } else {
            0.0
        };
        d.push(curve.eval(u)?);
        // chain rule: d/dt = d/du * du/dt
        d_dot.push(if duration > 0.0 {
            dcurve.eval(u)? / duration
        } else {
            0.0
        });
    }
    Ok(LateralTrack {
        t0: track.t0,
        dt: track.dt,
        d,
        d_dot,
    })
}

/// Marker crossings found in a stitched continuous lateral course.
///
/// Starting from the initial lane's centerline at offset 0, a crossing of the
/// +w/2 boundary going up is an LCL event, -w/2 going down an LCR event; the
/// reference then moves one lane width.
pub fn detect_lane_change_events(stitched: &LateralTrack, lane_width: f64) -> Vec<(f64, ManeuverKind)> {
    let mut events = Vec::new();
    let mut reference = 0.0;
    for k in 1..stitched.len() {
        let upper = reference + 0.5 * lane_width;
        let lower = reference - 0.5 * lane_width;
        let (a, b) = (stitched.d[k - 1], stitched.d[k]);
        if a < upper && b >= upper {
            let w = (upper - a) / (b - a);
            events.push((stitched.time_at(k - 1) + w * stitched.dt, ManeuverKind::Lcl));
            reference += lane_width;
        } else if a > lower && b <= lower {
            let w = (lower - a) / (b - a);
            events.push((stitched.time_at(k - 1) + w * stitched.dt, ManeuverKind::Lcr));
            reference -= lane_width;
        }
    }
    events
}

/// Places maneuver bounds around one crossing event using the smoothed
/// lateral velocity and the starting-lane centerline rule.
pub fn segment_maneuver(
    smoothed: &LateralTrack,
    t_cross: f64,
    kind: ManeuverKind,
    ref_before: f64,
    params: &LabelingParams,
) -> Result<ManeuverSegment> {
    let thr = params.velocity_threshold;
    let k_cross = ((t_cross - smoothed.t0) / smoothed.dt).floor() as usize;
    let k_cross = k_cross.min(smoothed.len() - 1);
    let fast = |k: usize| smoothed.d_dot[k].abs() >= thr - 1e-12;

    if !fast(k_cross) && (k_cross + 1 >= smoothed.len() || !fast(k_cross + 1)) {
        return Err(Error::DegenerateManeuver);
    }

    // start: latest rise of |d_dot| through the threshold before the crossing
    let mut k_start = None;
    for k in (0..k_cross).rev() {
        if !fast(k) && fast(k + 1) {
            k_start = Some(k + 1);
            break;
        }
        if k == 0 && fast(0) {
            k_start = Some(0);
        }
    }
    if k_start.is_none() && fast(k_cross) {
        // fast from the first sample onward
        k_start = Some(0);
    }
    let mut k_start = k_start.ok_or(Error::DegenerateManeuver)?;

    // the motion before the vehicle last departs its starting-lane centerline
    // is lane centering; take the later of the two bounds
    let centered = |k: usize| {
        let rel = smoothed.d[k] - ref_before;
        match kind {
            ManeuverKind::Lcl => rel <= 0.0,
            ManeuverKind::Lcr => rel >= 0.0,
            ManeuverKind::Lk => true,
        }
    };
    for k in (k_start..k_cross).rev() {
        if centered(k) {
            k_start = k_start.max(k + 1);
            break;
        }
    }

    // end: earliest fall of |d_dot| below the threshold after the crossing,
    // with one sample of hysteresis against chattering
    let mut k_end = smoothed.len() - 1;
    let mut k = k_cross + 1;
    while k < smoothed.len() {
        if !fast(k) && (k + 1 >= smoothed.len() || !fast(k + 1)) {
            k_end = k;
            break;
        }
        k += 1;
    }

    let seg = ManeuverSegment {
        kind,
        t_start: smoothed.time_at(k_start),
        t_end: smoothed.time_at(k_end),
        t_cross,
        ref_before,
    };
    if seg.t_end - seg.t_start < params.min_duration {
        return Err(Error::DegenerateManeuver);
    }
    Ok(seg)
}

/// Full per-trajectory labeling: resample, stitch, smooth, detect, segment.
pub fn analyze_trajectory(states: &[FrenetState], params: &LabelingParams) -> Result<LabelingOutcome> {
    let raw = resample_uniform(states, params.dt)?;
    let (stitched, ref_offsets) = stitch_lateral(&raw, params.lane_width);
    let smoothed = smooth_lateral(&stitched, params.knot_spacing)?;
    let events = detect_lane_change_events(&stitched, params.lane_width);

    let mut maneuvers = Vec::new();
    let mut discarded = 0usize;
    let mut reference = 0.0;
    for (t_cross, kind) in events {
        match segment_maneuver(&smoothed, t_cross, kind, reference, params) {
            Ok(seg) => maneuvers.push(seg),
            Err(Error::DegenerateManeuver) => discarded += 1,
            Err(e) => return Err(e),
        }
        reference += match kind {
            ManeuverKind::Lcl => params.lane_width,
            ManeuverKind::Lcr => -params.lane_width,
            ManeuverKind::Lk => 0.0,
        };
    }

    // clip overlapping neighbors, then fill all remaining time with LK
    maneuvers.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
    for i in 1..maneuvers.len() {
        if maneuvers[i].t_start < maneuvers[i - 1].t_end {
            maneuvers[i].t_start = maneuvers[i - 1].t_end;
        }
    }
    let mut labels = Vec::new();
    let mut cursor = stitched.t0;
    for seg in &maneuvers {
        if seg.t_start > cursor {
            labels.push(ManeuverLabel {
                kind: ManeuverKind::Lk,
                t_start: cursor,
                t_end: seg.t_start,
            });
        }
        labels.push(ManeuverLabel {
            kind: seg.kind,
            t_start: seg.t_start,
            t_end: seg.t_end,
        });
        cursor = seg.t_end;
    }
    let t_end = stitched.t_end();
    if t_end > cursor {
        labels.push(ManeuverLabel {
            kind: ManeuverKind::Lk,
            t_start: cursor,
            t_end,
        });
    }

    Ok(LabelingOutcome {
        labels,
        maneuvers,
        stitched,
        smoothed,
        ref_offsets,
        discarded,
    })
}

/// Labels every trajectory of a dataset. Trajectories that fail to label are
/// skipped and counted in the returned report.
pub fn label_dataset(dataset: &Dataset, params: &LabelingParams) -> (Dataset, LabelReport) {
    let mut out = Dataset {
        trajectories: Vec::with_capacity(dataset.trajectories.len()),
        sample_rate: dataset.sample_rate,
    };
    let mut report = LabelReport::default();
    for traj in &dataset.trajectories {
        match analyze_trajectory(&traj.states, params) {
            Ok(outcome) => {
                report.discarded_events += outcome.discarded;
                for seg in &outcome.maneuvers {
                    *report.count_mut(seg.kind) += 1;
                }
                let mut labeled = traj.clone();
                labeled.labels = outcome.labels;
                out.trajectories.push(labeled);
            }
            Err(e) => {
                report.skipped_trajectories.push((traj.vehicle_id, e.to_string()));
            }
        }
    }
    (out, report)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LabelReport {
    pub lcl: usize,
    pub lcr: usize,
    pub discarded_events: usize,
    pub skipped_trajectories: Vec<(u64, String)>,
}

impl LabelReport {
    fn count_mut(&mut self, kind: ManeuverKind) -> &mut usize {
        match kind {
            ManeuverKind::Lcl => &mut self.lcl,
            ManeuverKind::Lcr => &mut self.lcr,
            ManeuverKind::Lk => &mut self.discarded_events,
        }
    }
}
