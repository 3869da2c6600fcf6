//! Maneuver-conditioned trajectory prediction: lateral Gaussian mixture over
//! matched prototypes with B-spline continuity adaptation, and a
//! constant-acceleration longitudinal model.

use serde::{Deserialize, Serialize};

use crate::bspline::{BSplineCurve, PolynomialCurve};
use crate::cluster::{ClusterPrototype, PrototypeLibrary};
use crate::error::{Error, Result};
use crate::matching::{match_all, MatchResult};
use crate::traj::{LateralTrack, ManeuverKind};

/// Prediction tunables.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PredictParams {
    /// Prediction horizon, s.
    pub horizon: f64,
    /// Length of the boundary adaptation interval, s.
    pub adapt_interval: f64,
    /// Time constant of the lane-keeping return-to-centerline model, s.
    pub lk_time_const: f64,
    /// Stationary lateral variance of lane keeping, m^2.
    pub lk_var: f64,
    /// Collapse the mixture onto the single best-matching prototype
    /// (baseline mode for ablations).
    #[serde(default)]
    pub best_only: bool,
}

impl Default for PredictParams {
    fn default() -> Self {
        PredictParams {
            horizon: 4.0,
            adapt_interval: 1.0,
            lk_time_const: 2.0,
            lk_var: 0.04,
            best_only: false,
        }
    }
}

/// Lateral prediction as a Gaussian mixture collapsed to per-step moments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixturePrediction {
    pub kind: ManeuverKind,
    pub dt: f64,
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
    pub weights: Vec<f64>,
    pub shifts: Vec<f64>,
}

/// Longitudinal constant-acceleration prediction with accumulated process
/// noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LongitudinalPrediction {
    pub s0: f64,
    pub v0: f64,
    pub a_bar: f64,
    pub var_a: f64,
    pub dt: f64,
    /// Per step: [s, v].
    pub mean: Vec<[f64; 2]>,
    /// Per step: row-major 2x2 covariance of [s, v].
    pub cov: Vec<[f64; 4]>,
}

/// Mixture weights w_m = (1/delta_m) / sum_k (1/delta_k).
///
/// An exact match (delta = 0) takes all the weight; several exact matches
/// split it equally.
pub fn mixture_weights(deltas: &[f64]) -> Vec<f64> {
    let zeros = deltas.iter().filter(|d| **d == 0.0).count();
    if zeros > 0 {
        return deltas
            .iter()
            .map(|d| if *d == 0.0 { 1.0 / zeros as f64 } else { 0.0 })
            .collect();
    }
    let total: f64 = deltas.iter().map(|d| 1.0 / d).sum();
    deltas.iter().map(|d| (1.0 / d) / total).collect()
}

/// Prototype mean/variance at local time `t` (seconds from the start of the
/// prototype arrays), with endpoint hold outside the support.
fn proto_at(proto: &ClusterPrototype, t: f64) -> (f64, f64) {
    let idx = (t / proto.dt).round() as i64;
    let idx = idx.clamp(0, proto.len() as i64 - 1) as usize;
    (proto.mu_d[idx], proto.var_d[idx])
}

/// Collapses per-component moments into mixture moments:
/// mu = sum w_m mu_m, var = sum w_m (var_m + mu_m^2) - mu^2.
fn combine_moments(mus: &[f64], vars: &[f64], weights: &[f64]) -> (f64, f64) {
    let mu: f64 = weights.iter().zip(mus).map(|(w, m)| w * m).sum();
    let second: f64 = weights
        .iter()
        .zip(mus)
        .zip(vars)
        .map(|((w, m), v)| w * (v + m * m))
        .sum();
    (mu, (second - mu * mu).max(0.0))
}

/// Raw (unadapted) mixture of prototype curves shifted by `taus`.
pub fn mixture_curve(
    protos: &[&ClusterPrototype],
    weights: &[f64],
    taus: &[f64],
    horizon: f64,
    dt: f64,
    kind: ManeuverKind,
) -> MixturePrediction {
    let n = (horizon / dt).round() as usize + 1;
    let mut mu = Vec::with_capacity(n);
    let mut var = Vec::with_capacity(n);
    let m = protos.len();
    let mut mus = vec![0.0; m];
    let mut vars = vec![0.0; m];
    for k in 0..n {
        let t = k as f64 * dt;
        for i in 0..m {
            let (pm, pv) = proto_at(protos[i], taus[i] + t);
            mus[i] = pm;
            vars[i] = pv;
        }
        let (cm, cv) = combine_moments(&mus, &vars, weights);
        mu.push(cm);
        var.push(cv);
    }
    MixturePrediction {
        kind,
        dt,
        mu,
        var,
        weights: weights.to_vec(),
        shifts: taus.to_vec(),
    }
}

/// Mean propagation and covariance of the discrete constant-acceleration
/// model: x_{k+1} = F x_k + G a_bar + G w, w ~ N(0, var_a), x = [s, v].
pub fn longitudinal_predict(
    s0: f64,
    v0: f64,
    a_bar: f64,
    var_a: f64,
    horizon: f64,
    dt: f64,
) -> LongitudinalPrediction {
    let n = (horizon / dt).round() as usize + 1;
    let mut mean = Vec::with_capacity(n);
    let mut cov = Vec::with_capacity(n);
    let (mut s, mut v) = (s0, v0);
    let mut p = [0.0f64; 4];
    let g = [0.5 * dt * dt, dt];
    mean.push([s, v]);
    cov.push(p);
    for _ in 1..n {
        s += v * dt + 0.5 * a_bar * dt * dt;
        v += a_bar * dt;
        // P <- F P F' + G G' var_a with F = [[1, dt], [0, 1]]
        let p00 = p[0] + dt * (p[1] + p[2]) + dt * dt * p[3];
        let p01 = p[1] + dt * p[3];
        let p10 = p[2] + dt * p[3];
        let p11 = p[3];
        p = [
            p00 + g[0] * g[0] * var_a,
            p01 + g[0] * g[1] * var_a,
            p10 + g[1] * g[0] * var_a,
            p11 + g[1] * g[1] * var_a,
        ];
        mean.push([s, v]);
        cov.push(p);
    }
    LongitudinalPrediction {
        s0,
        v0,
        a_bar,
        var_a,
        dt,
        mean,
        cov,
    }
}

/// Boundary state estimated from the tail of the partial track: the observed
/// position plus first/second derivatives of a cubic least-squares fit to the
/// last second.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryState {
    pub d: f64,
    pub d_dot: f64,
    pub d_ddot: f64,
}

pub fn estimate_boundary(partial: &LateralTrack, window: f64) -> BoundaryState {
    let n = partial.len();
    let take = ((window / partial.dt).round() as usize + 1).min(n);
    let start = n - take;
    // fit over t in [-window, 0] so the boundary is t = 0
    let ts: Vec<f64> = (start..n)
        .map(|k| (k as f64 - (n - 1) as f64) * partial.dt)
        .collect();
    let ys: Vec<f64> = partial.d[start..].to_vec();
    let deg = 3.min(take - 1);
    let poly = PolynomialCurve::fit(&ts, &ys, deg);
    let d1 = poly.derivative();
    let d2 = d1.derivative();
    BoundaryState {
        d: partial.d[n - 1],
        d_dot: d1.eval(0.0),
        d_ddot: d2.eval(0.0),
    }
}

/// One prototype mean prepared for the horizon: either a boundary-adapted
/// spline over the remaining support or a fallback offset fade for supports
/// too short to host the adaptation interval.
enum AdaptedMean {
    Spline {
        spline: BSplineCurve,
        /// Remaining support length, s (the spline domain [0,1] maps onto it).
        span: f64,
    },
    Fade {
        offset: f64,
        fade: f64,
    },
}

struct AdaptedProto<'a> {
    proto: &'a ClusterPrototype,
    tau: f64,
    mean: AdaptedMean,
}

impl AdaptedProto<'_> {
    fn mu(&self, t: f64) -> f64 {
        match &self.mean {
            AdaptedMean::Spline { spline, span } => {
                let u = (t / span).clamp(0.0, 1.0);
                spline.eval(u).unwrap_or_else(|_| proto_at(self.proto, self.tau + t).0)
            }
            AdaptedMean::Fade { offset, fade } => {
                let base = proto_at(self.proto, self.tau + t).0;
                base + offset * (1.0 - t / fade).max(0.0)
            }
        }
    }

    fn var(&self, t: f64) -> f64 {
        proto_at(self.proto, self.tau + t).1
    }
}

fn adapt_prototype<'a>(
    proto: &'a ClusterPrototype,
    m: &MatchResult,
    boundary: &BoundaryState,
    adapt_interval: f64,
) -> AdaptedProto<'a> {
    let span = proto.duration() - m.tau;
    let mean = if span > adapt_interval + 4.0 * proto.dt {
        adapt_spline(proto, m.tau, span, boundary, adapt_interval)
            .unwrap_or_else(|_| fallback_fade(proto, m.tau, boundary, adapt_interval, span))
    } else {
        fallback_fade(proto, m.tau, boundary, adapt_interval, span)
    };
    AdaptedProto {
        proto,
        tau: m.tau,
        mean,
    }
}

fn fallback_fade(
    proto: &ClusterPrototype,
    tau: f64,
    boundary: &BoundaryState,
    adapt_interval: f64,
    span: f64,
) -> AdaptedMean {
    let offset = boundary.d - proto_at(proto, tau).0;
    AdaptedMean::Fade {
        offset,
        fade: adapt_interval.min(span.max(proto.dt)),
    }
}

/// Degree-5 least-squares fit of the remaining prototype mean on [0,1],
/// triple knot at the end of the adaptation interval, then the start of the
/// curve is re-solved to pass through the observed boundary state.
fn adapt_spline(
    proto: &ClusterPrototype,
    tau: f64,
    span: f64,
    boundary: &BoundaryState,
    adapt_interval: f64,
) -> Result<AdaptedMean> {
    let n_samples = (span / proto.dt).round() as usize + 1;
    let ts: Vec<f64> = (0..n_samples)
        .map(|k| k as f64 * proto.dt / span)
        .collect();
    let ys: Vec<f64> = (0..n_samples)
        .map(|k| proto_at(proto, tau + k as f64 * proto.dt).0)
        .collect();
    let poly = PolynomialCurve::fit(&ts, &ys, 5.min(n_samples - 1));
    let mut spline = BSplineCurve::from_polynomial(&poly, 5)?;
    let u_b = adapt_interval / span;
    for _ in 0..3 {
        spline = spline.insert_knot(u_b)?;
    }
    // chain rule: d/du = span * d/dt
    let spline = spline.boundary_fit(
        boundary.d,
        boundary.d_dot * span,
        boundary.d_ddot * span * span,
        0.0,
    )?;
    Ok(AdaptedMean::Spline { spline, span })
}

/// Full lateral + longitudinal prediction conditioned on the detected
/// maneuver. Lane changes mix boundary-adapted prototypes; lane keeping
/// decays exponentially toward the centerline.
pub fn predict_trajectory(
    partial: &LateralTrack,
    library: &PrototypeLibrary,
    kind: ManeuverKind,
    s0: f64,
    v0: f64,
    a_obs: f64,
    params: &PredictParams,
) -> Result<(MixturePrediction, LongitudinalPrediction)> {
    let dt = library.dt;
    if kind == ManeuverKind::Lk {
        return Ok(lk_prediction(partial, s0, v0, a_obs, dt, params));
    }
    let protos = library.of_kind(kind);
    let matches = match_all(partial, protos);
    if matches.is_empty() {
        return Err(Error::NoMatch);
    }
    let deltas: Vec<f64> = matches.iter().map(|m| m.delta_p).collect();
    let weights = if params.best_only {
        let best = deltas
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        let mut w = vec![0.0; deltas.len()];
        w[best] = 1.0;
        w
    } else {
        mixture_weights(&deltas)
    };
    let boundary = estimate_boundary(partial, params.adapt_interval);
    let adapted: Vec<AdaptedProto> = matches
        .iter()
        .map(|m| adapt_prototype(&protos[m.prototype], m, &boundary, params.adapt_interval))
        .collect();

    let n = (params.horizon / dt).round() as usize + 1;
    let mut mu = Vec::with_capacity(n);
    let mut var = Vec::with_capacity(n);
    let mut mus = vec![0.0; adapted.len()];
    let mut vars = vec![0.0; adapted.len()];
    for k in 0..n {
        let t = k as f64 * dt;
        for (i, a) in adapted.iter().enumerate() {
            mus[i] = a.mu(t);
            vars[i] = a.var(t);
        }
        let (cm, cv) = combine_moments(&mus, &vars, &weights);
        mu.push(cm);
        var.push(cv);
    }
    let accels: Vec<f64> = matches
        .iter()
        .map(|m| protos[m.prototype].mean_accel)
        .collect();
    let avars: Vec<f64> = matches
        .iter()
        .map(|m| protos[m.prototype].var_accel)
        .collect();
    let (a_bar, var_a) = combine_moments(&accels, &avars, &weights);
    let longitudinal = longitudinal_predict(s0, v0, a_bar, var_a, params.horizon, dt);
    Ok((
        MixturePrediction {
            kind,
            dt,
            mu,
            var,
            weights,
            shifts: matches.iter().map(|m| m.tau).collect(),
        },
        longitudinal,
    ))
}

/// Lane keeping: first-order return to the centerline with the corpus
/// variance as the stationary spread.
fn lk_prediction(
    partial: &LateralTrack,
    s0: f64,
    v0: f64,
    a_obs: f64,
    dt: f64,
    params: &PredictParams,
) -> (MixturePrediction, LongitudinalPrediction) {
    let d0 = *partial.d.last().unwrap();
    let n = (params.horizon / dt).round() as usize + 1;
    let tc = params.lk_time_const;
    let mut mu = Vec::with_capacity(n);
    let mut var = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        mu.push(d0 * (-t / tc).exp());
        var.push(params.lk_var * (1.0 - (-2.0 * t / tc).exp()));
    }
    let longitudinal = longitudinal_predict(s0, v0, a_obs, 0.0, params.horizon, dt);
    (
        MixturePrediction {
            kind: ManeuverKind::Lk,
            dt,
            mu,
            var,
            weights: vec![1.0],
            shifts: vec![0.0],
        },
        longitudinal,
    )
}
