//! Evaluation: stratified splitting, balanced frame-level classification
//! metrics, average prediction time, and horizon-binned error curves.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::classify::N_CLASSES;
use crate::error::{Error, Result};
use crate::traj::{Dataset, ManeuverKind, Trajectory};

/// Kind a trajectory is stratified under: its first lane-change label, or LK
/// if it contains none.
pub fn stratum(traj: &Trajectory) -> ManeuverKind {
    traj.labels
        .iter()
        .map(|l| l.kind)
        .find(|k| *k != ManeuverKind::Lk)
        .unwrap_or(ManeuverKind::Lk)
}

/// Stratified split: per maneuver kind, `ratio` of the trajectories go to the
/// train fraction (count within +-1 of the exact ratio). Deterministic per
/// seed.
pub fn split_dataset(dataset: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut by_kind: [Vec<usize>; N_CLASSES] = [Vec::new(), Vec::new(), Vec::new()];
    for (i, traj) in dataset.trajectories.iter().enumerate() {
        by_kind[stratum(traj).index()].push(i);
    }
    for group in &by_kind {
        if group.len() == 1 {
            return Err(Error::StratificationError(
                "a maneuver class has fewer than two trajectories",
            ));
        }
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for group in &mut by_kind {
        group.shuffle(&mut rng);
        let n_train = (group.len() as f64 * ratio).round() as usize;
        train_idx.extend_from_slice(&group[..n_train]);
        test_idx.extend_from_slice(&group[n_train..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let pick = |idx: &[usize]| Dataset {
        trajectories: idx.iter().map(|&i| dataset.trajectories[i].clone()).collect(),
        sample_rate: dataset.sample_rate,
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}

/// Balanced per-class classification metrics; `None` when the class never
/// occurs in the labels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub tpr: f64,
    pub fpr: f64,
    /// Balanced precision TPR / (TPR + FPR).
    pub prc: f64,
    pub f1: f64,
    pub miss_rate: f64,
    pub support: usize,
}

/// Frame-level confusion over aligned prediction/label streams.
pub fn balanced_metrics(
    predictions: &[ManeuverKind],
    labels: &[ManeuverKind],
) -> [Option<ClassMetrics>; N_CLASSES] {
    assert_eq!(predictions.len(), labels.len());
    let mut tp = [0usize; N_CLASSES];
    let mut fp = [0usize; N_CLASSES];
    let mut fne = [0usize; N_CLASSES];
    let mut tn = [0usize; N_CLASSES];
    for (&p, &l) in predictions.iter().zip(labels) {
        for c in 0..N_CLASSES {
            match (p.index() == c, l.index() == c) {
                (true, true) => tp[c] += 1,
                (true, false) => fp[c] += 1,
                (false, true) => fne[c] += 1,
                (false, false) => tn[c] += 1,
            }
        }
    }
    std::array::from_fn(|c| {
        let support = tp[c] + fne[c];
        if support == 0 {
            return None;
        }
        let tpr = tp[c] as f64 / support as f64;
        let neg = fp[c] + tn[c];
        let fpr = if neg == 0 { 0.0 } else { fp[c] as f64 / neg as f64 };
        let prc = if tpr + fpr > 0.0 { tpr / (tpr + fpr) } else { 0.0 };
        let f1 = if prc + tpr > 0.0 {
            2.0 * prc * tpr / (prc + tpr)
        } else {
            0.0
        };
        Some(ClassMetrics {
            tpr,
            fpr,
            prc,
            f1,
            miss_rate: 1.0 - tpr,
            support,
        })
    })
}

/// Per-frame classifier output for one lane-change maneuver, used for the
/// prediction-time statistic.
#[derive(Debug, Clone)]
pub struct ManeuverStream {
    pub kind: ManeuverKind,
    /// Marking-crossing time of the maneuver.
    pub t_cross: f64,
    /// (frame time, predicted class), ascending in time.
    pub frames: Vec<(f64, ManeuverKind)>,
}

/// Prediction time of one maneuver: how long before `t_cross` the correct
/// class has been output continuously. 0 if the frame at the crossing is
/// already wrong (never detected).
pub fn prediction_time(stream: &ManeuverStream) -> f64 {
    let mut earliest: Option<f64> = None;
    for &(t, p) in stream.frames.iter().rev() {
        if t > stream.t_cross {
            continue;
        }
        if p == stream.kind {
            earliest = Some(t);
        } else {
            break;
        }
    }
    earliest.map_or(0.0, |t| stream.t_cross - t)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PredictionTimeSummary {
    /// Mean over all maneuvers; undetected ones contribute 0.
    pub mean_all: f64,
    /// Mean over detected maneuvers only.
    pub mean_detected: Option<f64>,
    pub n_maneuvers: usize,
    pub n_detected: usize,
}

pub fn avg_prediction_time(streams: &[ManeuverStream]) -> PredictionTimeSummary {
    let times: Vec<f64> = streams.iter().map(prediction_time).collect();
    let n = times.len();
    let detected: Vec<f64> = times.iter().copied().filter(|t| *t > 0.0).collect();
    PredictionTimeSummary {
        mean_all: if n == 0 { 0.0 } else { times.iter().sum::<f64>() / n as f64 },
        mean_detected: if detected.is_empty() {
            None
        } else {
            Some(detected.iter().sum::<f64>() / detected.len() as f64)
        },
        n_maneuvers: n,
        n_detected: detected.len(),
    }
}

/// Mean absolute error per prediction-age bin; bins without samples report
/// `None`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinnedErrors {
    pub bin_width: f64,
    pub means: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

impl BinnedErrors {
    pub fn n_bins(&self) -> usize {
        self.means.len()
    }
}

/// Bins (prediction age tau, absolute error) pairs into [n*w, (n+1)*w).
pub fn position_error_bins(samples: &[(f64, f64)], bin_width: f64, max_tau: f64) -> BinnedErrors {
    let n_bins = (max_tau / bin_width).round() as usize;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for &(tau, err) in samples {
        if tau < 0.0 || tau >= max_tau {
            continue;
        }
        let b = ((tau / bin_width).floor() as usize).min(n_bins - 1);
        sums[b] += err.abs();
        counts[b] += 1;
    }
    BinnedErrors {
        bin_width,
        means: (0..n_bins)
            .map(|b| {
                if counts[b] > 0 {
                    Some(sums[b] / counts[b] as f64)
                } else {
                    None
                }
            })
            .collect(),
        counts,
    }
}

/// Variance floor applied inside [`mahalanobis_error_bins`]; floored samples
/// are counted in the returned diagnostics.
pub const VAR_FLOOR: f64 = 1e-6;

/// Same binning with errors normalized by the predicted sigma.
/// Input triples: (tau, signed error, predicted variance).
pub fn mahalanobis_error_bins(
    samples: &[(f64, f64, f64)],
    bin_width: f64,
    max_tau: f64,
) -> (BinnedErrors, usize) {
    let mut floored = 0;
    let normalized: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(tau, err, var)| {
            let v = if var < VAR_FLOOR {
                floored += 1;
                VAR_FLOOR
            } else {
                var
            };
            (tau, err.abs() / v.sqrt())
        })
        .collect();
    (position_error_bins(&normalized, bin_width, max_tau), floored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traj::{FrenetState, ManeuverLabel};
    use approx::assert_abs_diff_eq;

    fn traj(id: u64, kind: Option<ManeuverKind>) -> Trajectory {
        let states = (0..10)
            .map(|k| FrenetState {
                t: k as f64 * 0.04,
                s: 0.0,
                s_dot: 30.0,
                d: 0.0,
                d_dot: 0.0,
            })
            .collect();
        Trajectory {
            vehicle_id: id,
            states,
            labels: kind
                .map(|k| {
                    vec![ManeuverLabel {
                        kind: k,
                        t_start: 0.0,
                        t_end: 0.36,
                    }]
                })
                .unwrap_or_default(),
        }
    }

    fn corpus(lcl: usize, lcr: usize, lk: usize) -> Dataset {
        let mut trajectories = Vec::new();
        let mut id = 0;
        for _ in 0..lcl {
            trajectories.push(traj(id, Some(ManeuverKind::Lcl)));
            id += 1;
        }
        for _ in 0..lcr {
            trajectories.push(traj(id, Some(ManeuverKind::Lcr)));
            id += 1;
        }
        for _ in 0..lk {
            trajectories.push(traj(id, None));
            id += 1;
        }
        Dataset {
            trajectories,
            sample_rate: 25.0,
        }
    }

    #[test]
    fn split_paper_counts() {
        let ds = corpus(156, 278, 300);
        let (train, test) = split_dataset(&ds, 0.7, 42).unwrap();
        let count = |ds: &Dataset, k: ManeuverKind| {
            ds.trajectories.iter().filter(|t| stratum(t) == k).count()
        };
        assert_eq!(count(&train, ManeuverKind::Lcl), 109);
        assert_eq!(count(&train, ManeuverKind::Lcr), 195);
        assert_eq!(count(&test, ManeuverKind::Lcl), 47);
        assert_eq!(count(&test, ManeuverKind::Lcr), 83);
        assert_eq!(train.trajectories.len() + test.trajectories.len(), 734);
    }

    #[test]
    fn split_is_partition_and_deterministic() {
        let ds = corpus(20, 30, 25);
        let (tr1, te1) = split_dataset(&ds, 0.7, 7).unwrap();
        let (tr2, te2) = split_dataset(&ds, 0.7, 7).unwrap();
        let ids = |d: &Dataset| d.trajectories.iter().map(|t| t.vehicle_id).collect::<Vec<_>>();
        assert_eq!(ids(&tr1), ids(&tr2));
        assert_eq!(ids(&te1), ids(&te2));
        let mut all = ids(&tr1);
        all.extend(ids(&te1));
        all.sort_unstable();
        assert_eq!(all, (0..75).collect::<Vec<_>>());
    }

    #[test]
    fn split_ratio_one_empties_test() {
        let ds = corpus(4, 4, 4);
        let (train, test) = split_dataset(&ds, 1.0, 1).unwrap();
        assert_eq!(train.trajectories.len(), 12);
        assert!(test.trajectories.is_empty());
    }

    #[test]
    fn split_singleton_class_errors() {
        let ds = corpus(1, 5, 5);
        assert!(matches!(
            split_dataset(&ds, 0.7, 1),
            Err(Error::StratificationError(_))
        ));
    }

    #[test]
    fn balanced_precision_arithmetic() {
        // TPR = 0.89, FPR = 0.04 -> PRC = 0.89 / 0.93
        let prc: f64 = 0.89 / (0.89 + 0.04);
        assert!((prc - 0.957).abs() < 1e-3);
        let f1: f64 = 2.0 * 0.96 * 0.89 / (0.96 + 0.89);
        assert!((f1 - 0.924).abs() < 1e-3);
    }

    #[test]
    fn metrics_perfect_classifier() {
        let labels = vec![ManeuverKind::Lcl, ManeuverKind::Lk, ManeuverKind::Lcr, ManeuverKind::Lk];
        let m = balanced_metrics(&labels, &labels);
        for c in m.iter().flatten() {
            assert_abs_diff_eq!(c.tpr, 1.0);
            assert_abs_diff_eq!(c.prc, 1.0);
            assert_abs_diff_eq!(c.f1, 1.0);
            assert_abs_diff_eq!(c.miss_rate, 0.0);
        }
    }

    #[test]
    fn metrics_absent_class_is_none() {
        let labels = vec![ManeuverKind::Lk; 10];
        let preds = vec![ManeuverKind::Lk; 10];
        let m = balanced_metrics(&preds, &labels);
        assert!(m[ManeuverKind::Lcl.index()].is_none());
        assert!(m[ManeuverKind::Lk.index()].is_some());
    }

    #[test]
    fn metrics_hand_counted_confusion() {
        use ManeuverKind::*;
        let labels = vec![Lcl, Lcl, Lcl, Lk, Lk, Lk, Lk, Lcr, Lcr, Lcr];
        let preds = vec![Lcl, Lcl, Lk, Lk, Lk, Lcl, Lk, Lcr, Lk, Lcr];
        let m = balanced_metrics(&preds, &labels);
        let lcl = m[Lcl.index()].unwrap();
        // TP=2, FN=1, FP=1, TN=6
        assert_abs_diff_eq!(lcl.tpr, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lcl.fpr, 1.0 / 7.0, epsilon = 1e-12);
        let expect_prc = lcl.tpr / (lcl.tpr + lcl.fpr);
        assert_abs_diff_eq!(lcl.prc, expect_prc, epsilon = 1e-12);
    }

    #[test]
    fn metrics_invariant_under_permutation() {
        use ManeuverKind::*;
        let labels = vec![Lcl, Lk, Lcr, Lk, Lcl, Lk];
        let preds = vec![Lcl, Lk, Lk, Lcr, Lcl, Lk];
        let m1 = balanced_metrics(&preds, &labels);
        let perm = [3, 0, 5, 1, 4, 2];
        let labels2: Vec<_> = perm.iter().map(|&i| labels[i]).collect();
        let preds2: Vec<_> = perm.iter().map(|&i| preds[i]).collect();
        let m2 = balanced_metrics(&preds2, &labels2);
        for c in 0..N_CLASSES {
            match (m1[c], m2[c]) {
                (Some(a), Some(b)) => assert_abs_diff_eq!(a.f1, b.f1, epsilon = 1e-12),
                (None, None) => {}
                _ => panic!("presence mismatch"),
            }
        }
    }

    fn stream(kind: ManeuverKind, t_cross: f64, preds: &[(f64, ManeuverKind)]) -> ManeuverStream {
        ManeuverStream {
            kind,
            t_cross,
            frames: preds.to_vec(),
        }
    }

    #[test]
    fn prediction_time_continuous_detection() {
        use ManeuverKind::*;
        let frames: Vec<(f64, ManeuverKind)> =
            (0..50).map(|k| (k as f64 * 0.1, if k >= 33 { Lcl } else { Lk })).collect();
        let s = stream(Lcl, 5.0, &frames);
        // correct from t=3.3 up to the last frame before crossing
        assert_abs_diff_eq!(prediction_time(&s), 5.0 - 3.3, epsilon = 1e-9);
    }

    #[test]
    fn prediction_time_intermittent_uses_last_run() {
        use ManeuverKind::*;
        // correct, then wrong, then correct from -1.0 s
        let s = stream(
            Lcr,
            2.0,
            &[
                (0.0, Lcr),
                (0.4, Lk),
                (1.0, Lcr),
                (1.5, Lcr),
                (2.0, Lcr),
            ],
        );
        assert_abs_diff_eq!(prediction_time(&s), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn prediction_time_never_detected_is_zero() {
        use ManeuverKind::*;
        let s = stream(Lcl, 2.0, &[(0.0, Lk), (1.0, Lk), (2.0, Lcr)]);
        assert_abs_diff_eq!(prediction_time(&s), 0.0);
        let summary = avg_prediction_time(&[s.clone(), stream(Lcl, 2.0, &[(0.0, Lcl), (2.0, Lcl)])]);
        assert_abs_diff_eq!(summary.mean_all, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(summary.mean_detected.unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(summary.n_detected, 1);
    }

    #[test]
    fn bins_constant_bias() {
        let samples: Vec<(f64, f64)> = (0..80).map(|k| (k as f64 * 0.05, 0.3)).collect();
        let b = position_error_bins(&samples, 0.5, 4.0);
        assert_eq!(b.n_bins(), 8);
        for m in b.means.iter() {
            assert_abs_diff_eq!(m.unwrap(), 0.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn bins_empty_reported_absent() {
        let samples = vec![(0.2, 1.0), (3.9, 2.0)];
        let b = position_error_bins(&samples, 0.5, 4.0);
        assert!(b.means[0].is_some());
        assert!(b.means[1].is_none());
        assert!(b.means[7].is_some());
        assert_eq!(b.counts[1], 0);
    }

    #[test]
    fn bins_match_reference_accumulation() {
        let samples: Vec<(f64, f64)> = (0..1000)
            .map(|k| {
                let tau = (k as f64 * 0.37) % 4.0;
                (tau, (k as f64 * 0.013).sin().abs())
            })
            .collect();
        let b = position_error_bins(&samples, 0.5, 4.0);
        for n in 0..8 {
            let lo = n as f64 * 0.5;
            let hi = lo + 0.5;
            let hits: Vec<f64> = samples
                .iter()
                .filter(|(t, _)| *t >= lo && *t < hi)
                .map(|(_, e)| *e)
                .collect();
            match b.means[n] {
                Some(m) => {
                    let oracle = hits.iter().sum::<f64>() / hits.len() as f64;
                    assert_abs_diff_eq!(m, oracle, epsilon = 1e-12);
                }
                None => assert!(hits.is_empty()),
            }
        }
    }

    #[test]
    fn mahalanobis_bins_unit_offset() {
        let samples: Vec<(f64, f64, f64)> =
            (0..40).map(|k| (k as f64 * 0.1, 0.5, 0.25)).collect();
        let (b, floored) = mahalanobis_error_bins(&samples, 0.5, 4.0);
        assert_eq!(floored, 0);
        for m in b.means.iter().flatten() {
            assert_abs_diff_eq!(*m, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mahalanobis_bins_floor_counted() {
        let samples = vec![(0.1, 0.5, 0.0), (0.2, 0.5, 0.25)];
        let (_, floored) = mahalanobis_error_bins(&samples, 0.5, 4.0);
        assert_eq!(floored, 1);
    }
}
