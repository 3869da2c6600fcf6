//! Core trajectory representations shared by every pipeline stage.
//!
//! Trajectories live on uniform time grids. The sign convention is positive
//! lateral offset `d` toward the left lane; it is fixed here and documented in
//! the CSV formats of [`crate::io`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lane-relative state of a vehicle at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrenetState {
    /// Time in seconds.
    pub t: f64,
    /// Arc length traveled along the lane, meters. Non-decreasing.
    pub s: f64,
    /// Longitudinal velocity, m/s. Non-negative.
    pub s_dot: f64,
    /// Signed lateral offset from the lane centerline, meters, positive left.
    pub d: f64,
    /// Lateral velocity, m/s.
    pub d_dot: f64,
}

/// Uniformly sampled lateral position/velocity series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateralTrack {
    /// Start time of the first sample, seconds.
    pub t0: f64,
    /// Sample period, seconds, > 0.
    pub dt: f64,
    /// Lateral offsets, meters.
    pub d: Vec<f64>,
    /// Lateral velocities, m/s. Same length as `d`.
    pub d_dot: Vec<f64>,
}

impl LateralTrack {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Duration T = (len - 1) * dt.
    pub fn duration(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 * self.dt
    }

    /// End time of the last sample.
    pub fn t_end(&self) -> f64 {
        self.t0 + self.duration()
    }

    /// Sample time of index `i`.
    pub fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }
}

/// The three-class maneuver set C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ManeuverKind {
    /// Lane change to the left.
    Lcl,
    /// Lane keeping.
    Lk,
    /// Lane change to the right.
    Lcr,
}

impl ManeuverKind {
    pub const ALL: [ManeuverKind; 3] = [ManeuverKind::Lcl, ManeuverKind::Lk, ManeuverKind::Lcr];

    pub fn as_str(&self) -> &'static str {
        match self {
            ManeuverKind::Lcl => "LCL",
            ManeuverKind::Lk => "LK",
            ManeuverKind::Lcr => "LCR",
        }
    }

    pub fn parse(s: &str) -> Option<ManeuverKind> {
        match s {
            "LCL" => Some(ManeuverKind::Lcl),
            "LK" => Some(ManeuverKind::Lk),
            "LCR" => Some(ManeuverKind::Lcr),
            _ => None,
        }
    }

    /// Index into per-class arrays, in the fixed order LCL < LK < LCR.
    pub fn index(&self) -> usize {
        match self {
            ManeuverKind::Lcl => 0,
            ManeuverKind::Lk => 1,
            ManeuverKind::Lcr => 2,
        }
    }

    pub fn from_index(i: usize) -> ManeuverKind {
        ManeuverKind::ALL[i]
    }
}

/// A labeled time interval within one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverLabel {
    pub kind: ManeuverKind,
    pub t_start: f64,
    pub t_end: f64,
}

/// One vehicle's trajectory with its labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub vehicle_id: u64,
    pub states: Vec<FrenetState>,
    pub labels: Vec<ManeuverLabel>,
}

/// A corpus of trajectories.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    /// Sample rate in Hz.
    pub sample_rate: f64,
}

impl Dataset {
    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }
}

/// Linearly interpolates a Frenet series onto the uniform grid t0, t0+dt, ...
///
/// Endpoints are preserved exactly: the first grid point is the first sample
/// time and the last grid point is the last sample time when the span is a
/// multiple of `dt` (otherwise the last interior grid point is kept and the
/// final sample is appended exactly).
pub fn resample_uniform(series: &[FrenetState], dt: f64) -> Result<LateralTrack> {
    if series.len() < 2 {
        return Err(Error::EmptyTrajectory);
    }
    if series.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(Error::NonMonotoneTime);
    }
    let t0 = series[0].t;
    let t_end = series[series.len() - 1].t;
    let span = t_end - t0;
    let n_steps = (span / dt + 1e-9).floor() as usize;
    let mut d = Vec::with_capacity(n_steps + 2);
    let mut d_dot = Vec::with_capacity(n_steps + 2);
    let mut seg = 0usize;
    let mut push_at = |t: f64, seg: &mut usize| {
        while *seg + 2 < series.len() && series[*seg + 1].t <= t {
            *seg += 1;
        }
        let a = &series[*seg];
        let b = &series[*seg + 1];
        let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        d.push(a.d + w * (b.d - a.d));
        d_dot.push(a.d_dot + w * (b.d_dot - a.d_dot));
    };
    for k in 0..=n_steps {
        push_at(t0 + k as f64 * dt, &mut seg);
    }
    // Preserve the final sample exactly if the span is not grid-aligned.
    if (span - n_steps as f64 * dt).abs() > 1e-9 * (1.0 + span.abs()) {
        d.push(series[series.len() - 1].d);
        d_dot.push(series[series.len() - 1].d_dot);
    } else {
        let last = d.len() - 1;
        d[last] = series[series.len() - 1].d;
        d_dot[last] = series[series.len() - 1].d_dot;
    }
    Ok(LateralTrack { t0, dt, d, d_dot })
}

/// Extends a track to a larger grid-aligned span by holding its endpoint values.
pub fn extend_to_span(track: &LateralTrack, t_min: f64, t_max: f64) -> Result<LateralTrack> {
    let eps = 1e-9;
    if t_min > track.t0 + eps || t_max < track.t_end() - eps {
        return Err(Error::SpanTooSmall { t_min, t_max });
    }
    let n_pre = ((track.t0 - t_min) / track.dt + 0.5).floor() as usize;
    let n_post = ((t_max - track.t_end()) / track.dt + 0.5).floor() as usize;
    let mut d = Vec::with_capacity(n_pre + track.len() + n_post);
    let mut d_dot = Vec::with_capacity(d.capacity());
    d.extend(std::iter::repeat(track.d[0]).take(n_pre));
    d_dot.extend(std::iter::repeat(track.d_dot[0]).take(n_pre));
    d.extend_from_slice(&track.d);
    d_dot.extend_from_slice(&track.d_dot);
    d.extend(std::iter::repeat(*track.d.last().unwrap()).take(n_post));
    d_dot.extend(std::iter::repeat(*track.d_dot.last().unwrap()).take(n_post));
    Ok(LateralTrack {
        t0: track.t0 - n_pre as f64 * track.dt,
        dt: track.dt,
        d,
        d_dot,
    })
}

/// Low-pass filtered difference quotient.
///
/// The raw quotient (d[k] - d[k-1]) / dt is smoothed by a first-order
/// exponential filter with coefficient `alpha`; `alpha = 1` is the raw
/// quotient. The first element duplicates the first quotient.
pub fn lowpass_diff(d: &[f64], dt: f64, alpha: f64) -> Result<Vec<f64>> {
    if d.len() < 2 {
        return Err(Error::EmptyTrajectory);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::BadFilterCoefficient(alpha));
    }
    let mut out = Vec::with_capacity(d.len());
    let q0 = (d[1] - d[0]) / dt;
    out.push(q0);
    let mut y = q0;
    for k in 1..d.len() {
        let q = (d[k] - d[k - 1]) / dt;
        y = alpha * q + (1.0 - alpha) * y;
        out.push(y);
    }
    Ok(out)
}
