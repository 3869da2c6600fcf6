//! Prototype learning: agglomerative hierarchical clustering of lane-change
//! tracks with pairwise alignment optimization.
//!
//! Clustering operates on lateral position tracks only; velocity prototype
//! curves are computed from the member velocity tracks after the fact for use
//! in matching. The cohesion rule is a cap on the merged cluster's peak
//! pointwise standard deviation: a merge that would push max_t sigma_d(t)
//! above `sigma_max` is inadmissible, and clustering terminates when no
//! admissible pair remains.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::LabelingOutcome;
use crate::traj::{extend_to_span, FrenetState, LateralTrack, ManeuverKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Peak pointwise standard deviation allowed for a merged cluster, meters.
    pub sigma_max: f64,
    /// Alignment search range, seconds (multiple of dt).
    pub max_shift: f64,
    /// Variance floor keeping Mahalanobis distances finite, m^2.
    pub var_floor: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            sigma_max: 0.35,
            max_shift: 1.0,
            var_floor: 1e-4,
        }
    }
}

/// One lane-change realization prepared for clustering: the lateral track in
/// the starting-lane frame anchored at the marker crossing, plus the member's
/// constant longitudinal acceleration estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemberTrack {
    pub lateral: LateralTrack,
    pub accel: f64,
}

/// Time-indexed mean/variance curves representing one cluster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterPrototype {
    pub kind: ManeuverKind,
    pub dt: f64,
    /// Start time of the curves, crossing-anchored (t = 0 at the crossing).
    pub t0: f64,
    pub mu_d: Vec<f64>,
    pub var_d: Vec<f64>,
    pub mu_v: Vec<f64>,
    pub var_v: Vec<f64>,
    pub n_members: usize,
    /// Indices of the member tracks in the training set.
    pub member_ids: Vec<usize>,
    /// Shift applied to each member track, seconds.
    pub member_shifts: Vec<f64>,
    /// Mean longitudinal acceleration over members, m/s^2.
    pub mean_accel: f64,
    /// Population variance of member accelerations, (m/s^2)^2.
    pub var_accel: f64,
}

impl ClusterPrototype {
    pub fn len(&self) -> usize {
        self.mu_d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu_d.is_empty()
    }

    /// Duration T_m = (len - 1) * dt.
    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    /// Position mean curve as a track (velocity channel carries mu_v).
    pub fn mean_track(&self) -> LateralTrack {
        LateralTrack {
            t0: self.t0,
            dt: self.dt,
            d: self.mu_d.clone(),
            d_dot: self.mu_v.clone(),
        }
    }
}

/// Trained prototype library with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrototypeLibrary {
    pub lcl: Vec<ClusterPrototype>,
    pub lcr: Vec<ClusterPrototype>,
    pub dt: f64,
    pub params: ClusterParams,
    /// Hash of the training corpus files.
    pub corpus_hash: String,
}

impl PrototypeLibrary {
    pub fn of_kind(&self, kind: ManeuverKind) -> &[ClusterPrototype] {
        match kind {
            ManeuverKind::Lcl => &self.lcl,
            ManeuverKind::Lcr => &self.lcr,
            ManeuverKind::Lk => &[],
        }
    }
}

/// Average Euclidean distance between two tracks over their union span, the
/// shorter one extended by holding its endpoint values. Trapezoid rule.
pub fn dissimilarity(a: &LateralTrack, b: &LateralTrack) -> Result<f64> {
    if (a.dt - b.dt).abs() > 1e-12 {
        return Err(Error::GridMismatch(a.dt, b.dt));
    }
    let t_min = a.t0.min(b.t0);
    let t_max = a.t_end().max(b.t_end());
    let ea = extend_to_span(a, t_min, t_max)?;
    let eb = extend_to_span(b, t_min, t_max)?;
    let n = ea.len().min(eb.len());
    if n < 2 {
        return Ok((ea.d[0] - eb.d[0]).abs());
    }
    let mut acc = 0.0;
    for k in 0..n {
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        let diff = ea.d[k] - eb.d[k];
        acc += w * diff * diff;
    }
    let t_total = (n - 1) as f64 * a.dt;
    Ok((acc * a.dt / t_total).sqrt())
}

/// Grid shift of `b` within +-max_shift minimizing the dissimilarity to `a`.
/// Ties break toward smaller |shift|, then toward negative shift.
pub fn optimal_alignment(a: &LateralTrack, b: &LateralTrack, max_shift: f64) -> Result<(f64, f64)> {
    let k_max = (max_shift / a.dt + 0.5).floor() as i64;
    let mut best: Option<(f64, f64)> = None;
    let mut order = Vec::with_capacity((2 * k_max + 1) as usize);
    order.push(0i64);
    for k in 1..=k_max {
        order.push(-k);
        order.push(k);
    }
    for k in order {
        let shift = k as f64 * a.dt;
        let shifted = LateralTrack {
            t0: b.t0 + shift,
            ..b.clone()
        };
        let delta = dissimilarity(a, &shifted)?;
        if best.map_or(true, |(_, bd)| delta < bd) {
            best = Some((shift, delta));
        }
    }
    best.map(|(s, d)| (s, d)).ok_or(Error::EmptyTrainingSet)
}

/// Recomputes mean/variance curves from member tracks and shifts over their
/// union span, with endpoint extension of shorter members.
fn compute_moments(
    tracks: &[MemberTrack],
    members: &[usize],
    shifts: &[f64],
    kind: ManeuverKind,
    var_floor: f64,
) -> ClusterPrototype {
    let dt = tracks[members[0]].lateral.dt;
    let mut t_min = f64::INFINITY;
    let mut t_max = f64::NEG_INFINITY;
    for (&m, &s) in members.iter().zip(shifts) {
        t_min = t_min.min(tracks[m].lateral.t0 + s);
        t_max = t_max.max(tracks[m].lateral.t_end() + s);
    }
    let n = ((t_max - t_min) / dt).round() as usize + 1;
    let count = members.len() as f64;
    let mut mu_d = vec![0.0; n];
    let mut m2_d = vec![0.0; n];
    let mut mu_v = vec![0.0; n];
    let mut m2_v = vec![0.0; n];
    for (&m, &s) in members.iter().zip(shifts) {
        let shifted = LateralTrack {
            t0: tracks[m].lateral.t0 + s,
            ..tracks[m].lateral.clone()
        };
        let ext = extend_to_span(&shifted, t_min, t_max).expect("union span covers member");
        for k in 0..n {
            mu_d[k] += ext.d[k];
            m2_d[k] += ext.d[k] * ext.d[k];
            mu_v[k] += ext.d_dot[k];
            m2_v[k] += ext.d_dot[k] * ext.d_dot[k];
        }
    }
    for k in 0..n {
        mu_d[k] /= count;
        mu_v[k] /= count;
        m2_d[k] = (m2_d[k] / count - mu_d[k] * mu_d[k]).max(var_floor);
        m2_v[k] = (m2_v[k] / count - mu_v[k] * mu_v[k]).max(var_floor);
    }
    let mean_accel = members.iter().map(|&m| tracks[m].accel).sum::<f64>() / count;
    let var_accel = members
        .iter()
        .map(|&m| (tracks[m].accel - mean_accel).powi(2))
        .sum::<f64>()
        / count;
    ClusterPrototype {
        kind,
        dt,
        t0: t_min,
        mu_d,
        var_d: m2_d,
        mu_v,
        var_v: m2_v,
        n_members: members.len(),
        member_ids: members.to_vec(),
        member_shifts: shifts.to_vec(),
        mean_accel,
        var_accel,
    }
}

/// Merges two clusters: member tracks of `b` are re-shifted by the
/// prototype-level shift composed with their stored shifts, then all moments
/// are recomputed from scratch.
pub fn merge(
    tracks: &[MemberTrack],
    a_members: &[usize],
    a_shifts: &[f64],
    b_members: &[usize],
    b_shifts: &[f64],
    shift: f64,
    kind: ManeuverKind,
    var_floor: f64,
) -> ClusterPrototype {
    let mut members: Vec<usize> = a_members.to_vec();
    members.extend_from_slice(b_members);
    let mut shifts: Vec<f64> = a_shifts.to_vec();
    shifts.extend(b_shifts.iter().map(|s| s + shift));
    compute_moments(tracks, &members, &shifts, kind, var_floor)
}

struct Cluster {
    members: Vec<usize>,
    shifts: Vec<f64>,
    proto: ClusterPrototype,
}

/// Agglomerative hierarchical clustering with alignment optimization.
pub fn ahc(
    tracks: &[MemberTrack],
    kind: ManeuverKind,
    params: &ClusterParams,
) -> Result<Vec<ClusterPrototype>> {
    if tracks.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut clusters: Vec<Cluster> = (0..tracks.len())
        .map(|i| Cluster {
            members: vec![i],
            shifts: vec![0.0],
            proto: compute_moments(tracks, &[i], &[0.0], kind, params.var_floor),
        })
        .collect();

    // pair cache: (delta, shift, known_inadmissible)
    let pair = |clusters: &[Cluster], i: usize, j: usize| -> Result<(f64, f64)> {
        let (shift, delta) = optimal_alignment(
            &clusters[i].proto.mean_track(),
            &clusters[j].proto.mean_track(),
            params.max_shift,
        )?;
        Ok((delta, shift))
    };
    let n0 = clusters.len();
    let mut deltas = vec![vec![(f64::INFINITY, 0.0); n0]; n0];
    let mut blocked = vec![vec![false; n0]; n0];
    let mut alive: Vec<bool> = vec![true; n0];
    for i in 0..n0 {
        for j in (i + 1)..n0 {
            deltas[i][j] = pair(&clusters, i, j)?;
        }
    }

    loop {
        // globally closest admissible pair: walk unblocked pairs in delta
        // order, blocking those whose merged peak sigma exceeds the cap
        let mut accepted: Option<(usize, usize, f64, ClusterPrototype)> = None;
        loop {
            let mut candidate: Option<(usize, usize)> = None;
            let mut best_delta = f64::INFINITY;
            for i in 0..clusters.len() {
                if !alive[i] {
                    continue;
                }
                for j in (i + 1)..clusters.len() {
                    if !alive[j] || blocked[i][j] {
                        continue;
                    }
                    if deltas[i][j].0 < best_delta {
                        best_delta = deltas[i][j].0;
                        candidate = Some((i, j));
                    }
                }
            }
            let Some((i, j)) = candidate else {
                break;
            };
            let shift = deltas[i][j].1;
            let merged = merge(
                tracks,
                &clusters[i].members,
                &clusters[i].shifts,
                &clusters[j].members,
                &clusters[j].shifts,
                shift,
                kind,
                params.var_floor,
            );
            let peak_sigma = merged
                .var_d
                .iter()
                .fold(0.0f64, |acc, &v| acc.max(v))
                .sqrt();
            if peak_sigma <= params.sigma_max {
                accepted = Some((i, j, shift, merged));
                break;
            }
            blocked[i][j] = true;
        }
        let Some((i, j, shift, merged)) = accepted else {
            break;
        };
        let mut members = clusters[i].members.clone();
        members.extend_from_slice(&clusters[j].members);
        let mut shifts = clusters[i].shifts.clone();
        shifts.extend(clusters[j].shifts.iter().map(|s| s + shift));
        clusters[i] = Cluster {
            members,
            shifts,
            proto: merged,
        };
        alive[j] = false;
        // alignment of the surviving prototype to all others must be updated
        for k in 0..clusters.len() {
            if k == i || !alive[k] {
                continue;
            }
            let (lo, hi) = if k < i { (k, i) } else { (i, k) };
            deltas[lo][hi] = pair(&clusters, lo, hi)?;
            blocked[lo][hi] = false;
        }
    }

    Ok(clusters
        .into_iter()
        .zip(alive)
        .filter(|(_, a)| *a)
        .map(|(c, _)| c.proto)
        .collect())
}

/// Least-squares constant-acceleration estimate: the slope of a linear fit to
/// the longitudinal velocity samples.
pub fn fit_accel(ts: &[f64], s_dots: &[f64]) -> f64 {
    let n = ts.len() as f64;
    if ts.len() < 2 {
        return 0.0;
    }
    let mt = ts.iter().sum::<f64>() / n;
    let mv = s_dots.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, v) in ts.iter().zip(s_dots) {
        num += (t - mt) * (v - mv);
        den += (t - mt) * (t - mt);
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Slices the lane-change maneuvers of one trajectory into crossing-anchored
/// member tracks in the starting-lane frame.
pub fn extract_member_tracks(
    states: &[FrenetState],
    outcome: &LabelingOutcome,
    kind: ManeuverKind,
) -> Vec<MemberTrack> {
    let sm = &outcome.smoothed;
    let dt = sm.dt;
    let mut out = Vec::new();
    for seg in outcome.maneuvers.iter().filter(|s| s.kind == kind) {
        let k0 = ((seg.t_start - sm.t0) / dt).round() as usize;
        let k1 = (((seg.t_end - sm.t0) / dt).round() as usize).min(sm.len() - 1);
        if k1 <= k0 + 1 {
            continue;
        }
        let d: Vec<f64> = sm.d[k0..=k1].iter().map(|v| v - seg.ref_before).collect();
        let d_dot = sm.d_dot[k0..=k1].to_vec();
        // anchor t = 0 at the marker crossing, snapped to the grid
        let t0 = ((seg.t_start - seg.t_cross) / dt).round() * dt;
        let span: Vec<&FrenetState> = states
            .iter()
            .filter(|s| s.t >= seg.t_start && s.t <= seg.t_end)
            .collect();
        let ts: Vec<f64> = span.iter().map(|s| s.t).collect();
        let vs: Vec<f64> = span.iter().map(|s| s.s_dot).collect();
        out.push(MemberTrack {
            lateral: LateralTrack { t0, dt, d, d_dot },
            accel: fit_accel(&ts, &vs),
        });
    }
    out
}
