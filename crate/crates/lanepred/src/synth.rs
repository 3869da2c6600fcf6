//! Synthetic highway scene generator: labeled lane-change and lane-keeping
//! trajectories with controllable shape diversity, so the full pipeline can
//! be exercised without recorded data.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traj::{Dataset, FrenetState, ManeuverKind, ManeuverLabel, Trajectory};

/// Lateral course shapes of a lane change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LateralProfile {
    /// Quintic polynomial with zero boundary velocity and acceleration.
    Quintic,
    /// Logistic sigmoid rescaled to exact endpoints.
    Sigmoid,
    /// Quintic with a transient past the target lane center.
    Overshoot,
}

impl LateralProfile {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "quintic" => Ok(LateralProfile::Quintic),
            "sigmoid" => Ok(LateralProfile::Sigmoid),
            "overshoot" => Ok(LateralProfile::Overshoot),
            other => Err(Error::BadSpec(format!("unknown lateral profile '{other}'"))),
        }
    }
}

/// Everything needed to generate one scene deterministically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: ManeuverKind,
    /// Duration of the maneuver itself, s (lane changes only).
    pub maneuver_duration: f64,
    /// Lane keeping before and after the maneuver, s.
    pub lead_in: f64,
    pub lead_out: f64,
    pub lane_width: f64,
    pub v0: f64,
    pub accel: f64,
    pub profile: LateralProfile,
    /// Time-warp exponent shaping asymmetry; 1.0 is symmetric.
    pub asymmetry: f64,
    /// Overshoot amplitude as a fraction of the lane width.
    pub overshoot: f64,
    /// Sigmoid steepness.
    pub steepness: f64,
    /// Additive lateral position noise, m.
    pub sigma_d: f64,
    pub dt: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn total_duration(&self) -> f64 {
        self.lead_in + self.maneuver_duration + self.lead_out
    }
}

/// Normalized transition xi(u): 0 -> 1 on [0, 1] with zero boundary slope.
fn transition(spec: &SceneSpec, u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0).powf(spec.asymmetry);
    let quintic = u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
    match spec.profile {
        LateralProfile::Quintic => quintic,
        LateralProfile::Sigmoid => {
            let f = |x: f64| 1.0 / (1.0 + (-spec.steepness * (x - 0.5)).exp());
            (f(u) - f(0.0)) / (f(1.0) - f(0.0))
        }
        LateralProfile::Overshoot => {
            quintic - spec.overshoot * (std::f64::consts::TAU * u).sin() * 4.0 * u * (1.0 - u)
        }
    }
}

/// Continuous lateral course relative to the starting lane centerline.
fn lateral_course(spec: &SceneSpec, t: f64, lk_amp: f64, lk_period: f64, lk_phase: f64) -> f64 {
    let meander = lk_amp * (std::f64::consts::TAU * t / lk_period + lk_phase).sin();
    match spec.kind {
        ManeuverKind::Lk => meander,
        ManeuverKind::Lcl | ManeuverKind::Lcr => {
            let sign = if spec.kind == ManeuverKind::Lcl { 1.0 } else { -1.0 };
            let u = (t - spec.lead_in) / spec.maneuver_duration;
            sign * spec.lane_width * transition(spec, u)
        }
    }
}

/// Generates one scene. The emitted `d` is relative to the *current* lane
/// centerline (it wraps by one lane width at boundary crossings, like a lane
/// assignment from a perception stack would); `d_dot` is the analytic rate of
/// the noiseless continuous course.
pub fn generate_scene(spec: &SceneSpec, vehicle_id: u64) -> Result<Trajectory> {
    if spec.total_duration() < 4.0 {
        return Err(Error::BadSpec("scene shorter than 4 s".into()));
    }
    if spec.kind != ManeuverKind::Lk && spec.maneuver_duration <= 0.0 {
        return Err(Error::BadSpec("non-positive maneuver duration".into()));
    }
    let mut rng = StdRng::seed_from_u64(spec.seed);
    // lane-keeping meander bounded to |d| <= 0.3 m with |d_dot| < 0.2 m/s
    let lk_amp = rng.random_range(0.05..0.25);
    let lk_period = rng.random_range(9.0..16.0);
    let lk_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let noise = Normal::new(0.0, spec.sigma_d.max(1e-12)).unwrap();

    let n = (spec.total_duration() / spec.dt).round() as usize + 1;
    let w = spec.lane_width;
    let mut states = Vec::with_capacity(n);
    let eps = 1e-4;
    for k in 0..n {
        let t = k as f64 * spec.dt;
        let d_cont = lateral_course(spec, t, lk_amp, lk_period, lk_phase);
        let d_dot = (lateral_course(spec, t + eps, lk_amp, lk_period, lk_phase)
            - lateral_course(spec, t - eps, lk_amp, lk_period, lk_phase))
            / (2.0 * eps);
        let lane = (d_cont / w).round();
        let mut d = d_cont - lane * w;
        if spec.sigma_d > 0.0 {
            d += noise.sample(&mut rng);
        }
        let s_dot = (spec.v0 + spec.accel * t).max(0.0);
        let s = spec.v0 * t + 0.5 * spec.accel * t * t;
        states.push(FrenetState {
            t,
            s,
            s_dot,
            d,
            d_dot,
        });
    }
    let labels = match spec.kind {
        ManeuverKind::Lk => Vec::new(),
        kind => vec![ManeuverLabel {
            kind,
            t_start: spec.lead_in,
            t_end: spec.lead_in + spec.maneuver_duration,
        }],
    };
    Ok(Trajectory {
        vehicle_id,
        states,
        labels,
    })
}

/// Corpus composition.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CorpusCounts {
    pub lcl: usize,
    pub lcr: usize,
    pub lk: usize,
}

impl Default for CorpusCounts {
    fn default() -> Self {
        // the LCL/LCR imbalance mirrors the evaluation corpus shape
        CorpusCounts {
            lcl: 156,
            lcr: 278,
            lk: 300,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub counts: CorpusCounts,
    pub lane_width: f64,
    pub sigma_d: f64,
    pub dt: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            counts: CorpusCounts::default(),
            lane_width: 3.6,
            sigma_d: 0.03,
            dt: 0.04,
        }
    }
}

/// Shape families the lane changes are drawn from. Families differ in
/// profile, duration band and shape parameters so clustering has visible
/// structure to recover.
#[derive(Debug, Clone, Copy)]
struct Family {
    profile: LateralProfile,
    duration: (f64, f64),
    asymmetry: (f64, f64),
    overshoot: (f64, f64),
    steepness: (f64, f64),
}

const FAMILIES: [Family; 6] = [
    // brisk symmetric quintic
    Family {
        profile: LateralProfile::Quintic,
        duration: (3.0, 3.8),
        asymmetry: (0.95, 1.05),
        overshoot: (0.0, 0.0),
        steepness: (0.0, 0.0),
    },
    // slow symmetric quintic
    Family {
        profile: LateralProfile::Quintic,
        duration: (5.8, 7.0),
        asymmetry: (0.95, 1.05),
        overshoot: (0.0, 0.0),
        steepness: (0.0, 0.0),
    },
    // steep sigmoid, medium duration
    Family {
        profile: LateralProfile::Sigmoid,
        duration: (4.2, 5.0),
        asymmetry: (1.0, 1.0),
        overshoot: (0.0, 0.0),
        steepness: (11.0, 13.0),
    },
    // shallow early-weighted sigmoid
    Family {
        profile: LateralProfile::Sigmoid,
        duration: (4.6, 5.6),
        asymmetry: (0.75, 0.85),
        overshoot: (0.0, 0.0),
        steepness: (6.0, 7.5),
    },
    // small overshoot
    Family {
        profile: LateralProfile::Overshoot,
        duration: (3.6, 4.4),
        asymmetry: (1.0, 1.0),
        overshoot: (0.06, 0.09),
        steepness: (0.0, 0.0),
    },
    // pronounced late overshoot
    Family {
        profile: LateralProfile::Overshoot,
        duration: (5.0, 5.8),
        asymmetry: (1.1, 1.2),
        overshoot: (0.12, 0.16),
        steepness: (0.0, 0.0),
    },
];

fn sample_range(rng: &mut StdRng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn scene_spec(
    kind: ManeuverKind,
    family: Option<&Family>,
    config: &CorpusConfig,
    rng: &mut StdRng,
) -> SceneSpec {
    let (profile, maneuver_duration, asymmetry, overshoot, steepness) = match family {
        Some(f) => (
            f.profile,
            sample_range(rng, f.duration),
            sample_range(rng, f.asymmetry),
            sample_range(rng, f.overshoot),
            sample_range(rng, f.steepness),
        ),
        None => (LateralProfile::Quintic, 0.0, 1.0, 0.0, 0.0),
    };
    SceneSpec {
        kind,
        maneuver_duration,
        lead_in: rng.random_range(2.5..4.0),
        lead_out: rng.random_range(2.5..4.0),
        lane_width: config.lane_width,
        v0: rng.random_range(20.0..35.0),
        accel: rng.random_range(-0.5..0.5),
        profile,
        asymmetry,
        overshoot,
        steepness,
        sigma_d: config.sigma_d,
        dt: config.dt,
        seed: rng.random(),
    }
}

/// Generates the full labeled corpus, cycling lane changes through the shape
/// families. Deterministic per seed.
pub fn generate_corpus(config: &CorpusConfig, seed: u64) -> Result<Dataset> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut trajectories = Vec::new();
    let mut id = 0u64;
    for (kind, count) in [
        (ManeuverKind::Lcl, config.counts.lcl),
        (ManeuverKind::Lcr, config.counts.lcr),
        (ManeuverKind::Lk, config.counts.lk),
    ] {
        for i in 0..count {
            let family = if kind == ManeuverKind::Lk {
                None
            } else {
                Some(&FAMILIES[i % FAMILIES.len()])
            };
            let spec = scene_spec(kind, family, config, &mut rng);
            trajectories.push(generate_scene(&spec, id)?);
            id += 1;
        }
    }
    Ok(Dataset {
        trajectories,
        sample_rate: 1.0 / config.dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::{label_dataset, LabelingParams};
    use approx::assert_abs_diff_eq;

    fn base_spec(kind: ManeuverKind, profile: LateralProfile) -> SceneSpec {
        SceneSpec {
            kind,
            maneuver_duration: 5.0,
            lead_in: 3.0,
            lead_out: 3.0,
            lane_width: 3.6,
            v0: 30.0,
            accel: 0.0,
            profile,
            asymmetry: 1.0,
            overshoot: 0.1,
            steepness: 9.0,
            sigma_d: 0.0,
            dt: 0.04,
            seed: 5,
        }
    }

    #[test]
    fn quintic_lcl_spans_one_lane() {
        let spec = base_spec(ManeuverKind::Lcl, LateralProfile::Quintic);
        let traj = generate_scene(&spec, 0).unwrap();
        // continuous course: starts at 0, ends at +3.6 == 0 in the new lane
        assert_abs_diff_eq!(traj.states[0].d, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(traj.states.last().unwrap().d, 0.0, epsilon = 1e-9);
        // peak rate at the maneuver midpoint
        let peak = traj
            .states
            .iter()
            .max_by(|a, b| a.d_dot.abs().total_cmp(&b.d_dot.abs()))
            .unwrap();
        assert_abs_diff_eq!(peak.t, 3.0 + 2.5, epsilon = 0.05);
        // quintic peak rate: 15/8 * w / T
        assert_abs_diff_eq!(peak.d_dot, 15.0 / 8.0 * 3.6 / 5.0, epsilon = 1e-3);
    }

    #[test]
    fn wrap_jumps_by_lane_width_at_crossing() {
        let spec = base_spec(ManeuverKind::Lcr, LateralProfile::Sigmoid);
        let traj = generate_scene(&spec, 0).unwrap();
        let mut max_jump = 0.0f64;
        for w in traj.states.windows(2) {
            max_jump = max_jump.max((w[1].d - w[0].d).abs());
        }
        assert!((max_jump - 3.6).abs() < 0.1, "max jump {max_jump}");
    }

    #[test]
    fn lk_meander_is_bounded() {
        for seed in 0..20 {
            let mut spec = base_spec(ManeuverKind::Lk, LateralProfile::Quintic);
            spec.seed = seed;
            let traj = generate_scene(&spec, 0).unwrap();
            for st in &traj.states {
                assert!(st.d.abs() <= 0.3, "d = {}", st.d);
                assert!(st.d_dot.abs() < 0.2, "d_dot = {}", st.d_dot);
            }
            assert!(traj.labels.is_empty());
        }
    }

    #[test]
    fn scene_is_deterministic_per_seed() {
        let mut spec = base_spec(ManeuverKind::Lcl, LateralProfile::Overshoot);
        spec.sigma_d = 0.03;
        let a = generate_scene(&spec, 0).unwrap();
        let b = generate_scene(&spec, 0).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert_eq!(x.d.to_bits(), y.d.to_bits());
        }
    }

    #[test]
    fn threshold_holds_inside_ground_truth_span() {
        for profile in [
            LateralProfile::Quintic,
            LateralProfile::Sigmoid,
            LateralProfile::Overshoot,
        ] {
            let spec = base_spec(ManeuverKind::Lcl, profile);
            let traj = generate_scene(&spec, 0).unwrap();
            let label = &traj.labels[0];
            let mid = 0.5 * (label.t_start + label.t_end);
            let at_mid = traj
                .states
                .iter()
                .min_by(|a, b| (a.t - mid).abs().total_cmp(&(b.t - mid).abs()))
                .unwrap();
            assert!(at_mid.d_dot.abs() > 0.2);
            // crossing of the lane boundary happens inside the labeled span
            let cross = traj
                .states
                .windows(2)
                .find(|w| (w[1].d - w[0].d).abs() > 1.8)
                .map(|w| w[0].t)
                .unwrap();
            assert!(cross > label.t_start && cross < label.t_end);
        }
    }

    #[test]
    fn corpus_counts_and_determinism() {
        let config = CorpusConfig {
            counts: CorpusCounts {
                lcl: 8,
                lcr: 12,
                lk: 5,
            },
            ..CorpusConfig::default()
        };
        let ds = generate_corpus(&config, 42).unwrap();
        assert_eq!(ds.trajectories.len(), 25);
        let lcl = ds
            .trajectories
            .iter()
            .filter(|t| t.labels.first().map(|l| l.kind) == Some(ManeuverKind::Lcl))
            .count();
        assert_eq!(lcl, 8);
        let ds2 = generate_corpus(&config, 42).unwrap();
        for (a, b) in ds.trajectories.iter().zip(&ds2.trajectories) {
            assert_eq!(a.states.len(), b.states.len());
            assert_eq!(a.states[10].d.to_bits(), b.states[10].d.to_bits());
        }
    }

    #[test]
    fn lk_only_corpus() {
        let config = CorpusConfig {
            counts: CorpusCounts {
                lcl: 0,
                lcr: 0,
                lk: 5,
            },
            ..CorpusConfig::default()
        };
        let ds = generate_corpus(&config, 1).unwrap();
        assert_eq!(ds.trajectories.len(), 5);
        assert!(ds.trajectories.iter().all(|t| t.labels.is_empty()));
    }

    #[test]
    fn auto_labeling_recovers_noiseless_corpus() {
        let config = CorpusConfig {
            counts: CorpusCounts {
                lcl: 30,
                lcr: 30,
                lk: 10,
            },
            sigma_d: 0.0,
            ..CorpusConfig::default()
        };
        let ds = generate_corpus(&config, 7).unwrap();
        let (_, report) = label_dataset(&ds, &LabelingParams::default());
        let recovered = report.lcl + report.lcr;
        assert!(
            recovered as f64 >= 0.95 * 60.0,
            "recovered {recovered} of 60 (lcl {}, lcr {})",
            report.lcl,
            report.lcr
        );
        assert!(report.lcl >= 28, "lcl {}", report.lcl);
        assert!(report.lcr >= 28, "lcr {}", report.lcr);
    }
}
