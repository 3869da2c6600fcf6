//! Matching of partially observed trajectories against the prototype library
//! and construction of classifier features.

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterPrototype;
use crate::error::{Error, Result};
use crate::traj::LateralTrack;

/// Saturation value substituted when no prototype yields a usable match.
pub const DELTA_SAT: f64 = 50.0;

/// Alignment window: tau is chosen minimizing the position distance over the
/// most recent 0.5 s.
pub const ALIGN_WINDOW: f64 = 0.5;

/// Ring buffer of the latest lateral states of one vehicle.
///
/// The newest sample sits at relative time 0; `as_track` exposes the buffer
/// as a [`LateralTrack`] with t0 = -(len-1)*dt.
#[derive(Debug, Clone)]
pub struct PartialTrajectory {
    dt: f64,
    cap: usize,
    d: Vec<f64>,
    d_dot: Vec<f64>,
}

impl PartialTrajectory {
    /// `t_buffer` is the buffer depth in seconds.
    pub fn new(dt: f64, t_buffer: f64) -> Self {
        let cap = (t_buffer / dt).round() as usize + 1;
        PartialTrajectory {
            dt,
            cap,
            d: Vec::with_capacity(cap),
            d_dot: Vec::with_capacity(cap),
        }
    }

    pub fn push(&mut self, d: f64, d_dot: f64) {
        if self.d.len() == self.cap {
            self.d.remove(0);
            self.d_dot.remove(0);
        }
        self.d.push(d);
        self.d_dot.push(d_dot);
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Buffered duration in seconds.
    pub fn filled(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 * self.dt
    }

    /// View relative to the newest sample, offset by `d_offset` (used to
    /// re-reference the buffer to the current lane centerline).
    pub fn as_track(&self, d_offset: f64) -> LateralTrack {
        LateralTrack {
            t0: -(self.len().saturating_sub(1) as f64) * self.dt,
            dt: self.dt,
            d: self.d.iter().map(|v| v - d_offset).collect(),
            d_dot: self.d_dot.clone(),
        }
    }
}

/// Which prototype channel a Mahalanobis distance is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Position,
    Velocity,
}

/// Result of matching one partial trajectory against one prototype.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MatchResult {
    pub prototype: usize,
    /// Shift of the prototype, seconds; the prototype sample at local time
    /// tau aligns with the newest buffered sample.
    pub tau: f64,
    pub delta_p: f64,
    pub delta_v: f64,
}

/// Average Mahalanobis L1 distance between the buffered track and a prototype
/// shifted by `tau`, over the evaluation period T = min(buffered, tau),
/// optionally further restricted to the most recent `window` seconds.
pub fn mahalanobis_l1(
    partial: &LateralTrack,
    proto: &ClusterPrototype,
    tau: f64,
    channel: Channel,
    window: Option<f64>,
) -> Result<f64> {
    let dt = proto.dt;
    let mut t_eval = partial.duration().min(tau);
    if let Some(w) = window {
        t_eval = t_eval.min(w);
    }
    let n_steps = (t_eval / dt + 1e-9).floor() as usize;
    if n_steps == 0 {
        return Err(Error::ZeroOverlap);
    }
    let t_eval = n_steps as f64 * dt;
    let (mu, var, series) = match channel {
        Channel::Position => (&proto.mu_d, &proto.var_d, &partial.d),
        Channel::Velocity => (&proto.mu_v, &proto.var_v, &partial.d_dot),
    };
    let last_p = partial.len() - 1;
    let mut acc = 0.0;
    for k in 0..=n_steps {
        // t runs from -t_eval to 0
        let back = n_steps - k;
        let pi = last_p - back;
        let mji = ((tau - back as f64 * dt) / dt).round() as i64;
        let mj = mji.clamp(0, mu.len() as i64 - 1) as usize;
        let w = if k == 0 || k == n_steps { 0.5 } else { 1.0 };
        acc += w * (series[pi] - mu[mj]).abs() / var[mj].sqrt();
    }
    Ok(acc * dt / t_eval)
}

/// Matches the partial trajectory against every prototype: tau is picked per
/// prototype by minimizing the recent-window position distance, then the full
/// position and velocity distances are evaluated at that tau.
pub fn match_all(partial: &LateralTrack, protos: &[ClusterPrototype]) -> Vec<MatchResult> {
    let mut out = Vec::with_capacity(protos.len());
    for (id, proto) in protos.iter().enumerate() {
        let n_tau = (proto.duration() / proto.dt).round() as usize;
        let mut best: Option<(f64, f64)> = None; // (windowed delta, tau)
        for k in 1..=n_tau {
            let tau = k as f64 * proto.dt;
            if let Ok(delta) =
                mahalanobis_l1(partial, proto, tau, Channel::Position, Some(ALIGN_WINDOW))
            {
                if best.map_or(true, |(bd, _)| delta < bd) {
                    best = Some((delta, tau));
                }
            }
        }
        let Some((_, tau)) = best else { continue };
        let Ok(delta_p) = mahalanobis_l1(partial, proto, tau, Channel::Position, None) else {
            continue;
        };
        let Ok(delta_v) = mahalanobis_l1(partial, proto, tau, Channel::Velocity, None) else {
            continue;
        };
        out.push(MatchResult {
            prototype: id,
            tau,
            delta_p,
            delta_v,
        });
    }
    out
}

/// Best match over a prototype set: minimal full-period position distance,
/// ties broken toward the lowest prototype id.
pub fn best_match(partial: &LateralTrack, protos: &[ClusterPrototype]) -> Result<MatchResult> {
    match_all(partial, protos)
        .into_iter()
        .min_by(|a, b| {
            a.delta_p
                .total_cmp(&b.delta_p)
                .then(a.prototype.cmp(&b.prototype))
        })
        .ok_or(Error::NoMatch)
}

/// The six raw classifier inputs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RawFeatures {
    pub d: f64,
    pub d_dot: f64,
    pub dp_lcr: f64,
    pub dp_lcl: f64,
    pub dv_lcr: f64,
    pub dv_lcl: f64,
}

/// Feature-vector layouts consumed by the classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureVariant {
    /// [d, d_dot] reference variant.
    Base2,
    /// [d, d_dot, dp_lcr - dp_lcl, dv_lcr - dv_lcl].
    Gda4,
    /// All six raw features.
    Bdt6,
}

impl FeatureVariant {
    pub fn dim(&self) -> usize {
        match self {
            FeatureVariant::Base2 => 2,
            FeatureVariant::Gda4 => 4,
            FeatureVariant::Bdt6 => 6,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureVariant::Base2 => "base2",
            FeatureVariant::Gda4 => "gda4",
            FeatureVariant::Bdt6 => "bdt6",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "base2" => Some(FeatureVariant::Base2),
            "gda4" => Some(FeatureVariant::Gda4),
            "bdt6" => Some(FeatureVariant::Bdt6),
            _ => None,
        }
    }
}

impl RawFeatures {
    pub fn to_variant(&self, variant: FeatureVariant) -> Vec<f64> {
        match variant {
            FeatureVariant::Base2 => vec![self.d, self.d_dot],
            FeatureVariant::Gda4 => vec![
                self.d,
                self.d_dot,
                self.dp_lcr - self.dp_lcl,
                self.dv_lcr - self.dv_lcl,
            ],
            FeatureVariant::Bdt6 => vec![
                self.d,
                self.d_dot,
                self.dp_lcr,
                self.dp_lcl,
                self.dv_lcr,
                self.dv_lcl,
            ],
        }
    }
}

/// Computes the raw feature set for the current buffer contents. Prototype
/// distances saturate at [`DELTA_SAT`] when no match exists.
pub fn extract_features(
    partial: &LateralTrack,
    lcl: &[ClusterPrototype],
    lcr: &[ClusterPrototype],
) -> RawFeatures {
    let last = partial.len() - 1;
    let (dp_lcl, dv_lcl) = match best_match(partial, lcl) {
        Ok(m) => (m.delta_p, m.delta_v),
        Err(_) => (DELTA_SAT, DELTA_SAT),
    };
    let (dp_lcr, dv_lcr) = match best_match(partial, lcr) {
        Ok(m) => (m.delta_p, m.delta_v),
        Err(_) => (DELTA_SAT, DELTA_SAT),
    };
    RawFeatures {
        d: partial.d[last],
        d_dot: partial.d_dot[last],
        dp_lcr,
        dp_lcl,
        dv_lcr,
        dv_lcl,
    }
}
