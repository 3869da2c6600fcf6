//! Maneuver classification: quadratic Gaussian discriminant analysis and an
//! AdaBoost.M2 ensemble of shallow decision trees.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::FeatureVariant;
use crate::traj::ManeuverKind;

pub const N_CLASSES: usize = 3;

/// Branch-node budget per tree.
pub const MAX_BRANCH_NODES: usize = 15;

/// Ensemble size.
pub const N_LEARNERS: usize = 90;

// ---------------------------------------------------------------------------
// GDA
// ---------------------------------------------------------------------------

/// Quadratic Gaussian discriminant model: one Gaussian per maneuver class.
///
/// The inverse covariance and log-determinant are precomputed at fit time so
/// prediction is a handful of multiply-adds per class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GdaModel {
    pub variant: FeatureVariant,
    pub priors: [f64; N_CLASSES],
    pub means: Vec<Vec<f64>>,
    pub covs: Vec<Vec<Vec<f64>>>,
    pub cov_inv: Vec<Vec<Vec<f64>>>,
    pub log_det: [f64; N_CLASSES],
}

/// Fits per-class mean and covariance with a relative ridge on the diagonal.
/// `priors` are normalized to sum to 1.
pub fn gda_fit(
    features: &[Vec<f64>],
    labels: &[ManeuverKind],
    priors: [f64; N_CLASSES],
    variant: FeatureVariant,
) -> Result<GdaModel> {
    let dim = variant.dim();
    let mut by_class: [Vec<&[f64]>; N_CLASSES] = [Vec::new(), Vec::new(), Vec::new()];
    for (f, &l) in features.iter().zip(labels) {
        by_class[l.index()].push(f.as_slice());
    }
    let mut means = Vec::with_capacity(N_CLASSES);
    let mut covs = Vec::with_capacity(N_CLASSES);
    let mut cov_inv = Vec::with_capacity(N_CLASSES);
    let mut log_det = [0.0; N_CLASSES];
    for (c, rows) in by_class.iter().enumerate() {
        if rows.is_empty() {
            return Err(Error::ClassAbsent(ManeuverKind::from_index(c).as_str()));
        }
        let n = rows.len() as f64;
        let mut mean = DVector::zeros(dim);
        for r in rows {
            mean += DVector::from_row_slice(&r[..dim]);
        }
        mean /= n;
        let mut cov = DMatrix::zeros(dim, dim);
        for r in rows {
            let x = DVector::from_row_slice(&r[..dim]) - &mean;
            cov += &x * x.transpose();
        }
        cov /= n;
        let ridge = 1e-6 * cov.trace() / dim as f64;
        for i in 0..dim {
            cov[(i, i)] += ridge.max(1e-12);
        }
        let chol = Cholesky::new(cov.clone()).ok_or(Error::DegenerateFeatures)?;
        log_det[c] = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let inv = chol.inverse();
        means.push(mean.as_slice().to_vec());
        covs.push((0..dim).map(|i| (0..dim).map(|j| cov[(i, j)]).collect()).collect());
        cov_inv.push((0..dim).map(|i| (0..dim).map(|j| inv[(i, j)]).collect()).collect());
    }
    let psum: f64 = priors.iter().sum();
    if psum <= 0.0 || !psum.is_finite() {
        return Err(Error::DegenerateFeatures);
    }
    Ok(GdaModel {
        variant,
        priors: [priors[0] / psum, priors[1] / psum, priors[2] / psum],
        means,
        covs,
        cov_inv,
        log_det,
    })
}

/// Argmax of class with the largest value; exact ties fall to the earlier
/// class index (LCL < LK < LCR).
fn argmax_class(scores: &[f64; N_CLASSES]) -> ManeuverKind {
    let mut best = 0;
    for c in 1..N_CLASSES {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    ManeuverKind::from_index(best)
}

/// Quadratic discriminant rule; returns the class and normalized posteriors.
pub fn gda_predict(model: &GdaModel, f: &[f64]) -> (ManeuverKind, [f64; N_CLASSES]) {
    let dim = model.variant.dim();
    let mut logp = [0.0; N_CLASSES];
    for c in 0..N_CLASSES {
        let mut quad = 0.0;
        for i in 0..dim {
            let xi = f[i] - model.means[c][i];
            for j in 0..dim {
                let xj = f[j] - model.means[c][j];
                quad += xi * model.cov_inv[c][i][j] * xj;
            }
        }
        logp[c] = model.priors[c].ln() - 0.5 * model.log_det[c] - 0.5 * quad;
    }
    let m = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut post = [0.0; N_CLASSES];
    let mut z = 0.0;
    for c in 0..N_CLASSES {
        post[c] = (logp[c] - m).exp();
        z += post[c];
    }
    for p in &mut post {
        *p /= z;
    }
    (argmax_class(&post), post)
}

// ---------------------------------------------------------------------------
// Decision trees
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Node {
    Branch {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        scores: [f64; N_CLASSES],
    },
}

/// Binary axis-aligned decision tree with confidence-vector leaves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    /// Leaf confidence vector for a feature row; components in [0,1], sum 1.
    pub fn predict(&self, f: &[f64]) -> [f64; N_CLASSES] {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Branch {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if f[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { scores } => return *scores,
            }
        }
    }

    pub fn branch_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Branch { .. }))
            .count()
    }
}

/// Per-feature argsort of the training matrix, shared across all trees of an
/// ensemble so each tree only filters by node membership.
pub struct SplitContext {
    order: Vec<Vec<u32>>,
}

impl SplitContext {
    pub fn new(features: &[Vec<f64>]) -> Self {
        let dim = features.first().map_or(0, |f| f.len());
        let order = (0..dim)
            .map(|j| {
                let mut idx: Vec<u32> = (0..features.len() as u32).collect();
                idx.sort_by(|&a, &b| features[a as usize][j].total_cmp(&features[b as usize][j]));
                idx
            })
            .collect();
        SplitContext { order }
    }
}

struct SplitChoice {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn gini_impurity(class_w: &[f64; N_CLASSES], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - class_w.iter().map(|w| (w / total).powi(2)).sum::<f64>()
}

/// Exhaustive best split of a node: maximizes the weighted impurity decrease
/// total·G(S) − (W_l·G(S_l) + W_r·G(S_r)). Ties are broken uniformly at
/// random via reservoir sampling so boosting retries can re-randomize.
fn best_split(
    features: &[Vec<f64>],
    labels: &[ManeuverKind],
    weights: &[f64],
    member: &[bool],
    class_w: &[f64; N_CLASSES],
    ctx: &SplitContext,
    rng: &mut StdRng,
) -> Option<SplitChoice> {
    let total: f64 = class_w.iter().sum();
    let parent = total * gini_impurity(class_w, total);
    let mut best: Option<SplitChoice> = None;
    let mut ties = 1u32;
    for (j, order) in ctx.order.iter().enumerate() {
        let mut left = [0.0; N_CLASSES];
        let mut left_total = 0.0;
        let mut prev_val: Option<f64> = None;
        for &iu in order {
            let i = iu as usize;
            if !member[i] {
                continue;
            }
            let v = features[i][j];
            if let Some(pv) = prev_val {
                if v > pv && left_total > 0.0 && left_total < total {
                    let right: [f64; N_CLASSES] =
                        std::array::from_fn(|c| class_w[c] - left[c]);
                    let gain = parent
                        - left_total * gini_impurity(&left, left_total)
                        - (total - left_total) * gini_impurity(&right, total - left_total);
                    let better = match &best {
                        None => true,
                        Some(b) => {
                            if (gain - b.gain).abs() <= 1e-12 * total.max(1.0) {
                                ties += 1;
                                rng.random_range(0..ties) == 0
                            } else {
                                gain > b.gain
                            }
                        }
                    };
                    if better {
                        if best
                            .as_ref()
                            .map_or(true, |b| (gain - b.gain).abs() > 1e-12 * total.max(1.0))
                        {
                            ties = 1;
                        }
                        best = Some(SplitChoice {
                            gain,
                            feature: j,
                            threshold: 0.5 * (pv + v),
                        });
                    }
                }
            }
            left[labels[i].index()] += weights[i];
            left_total += weights[i];
            prev_val = Some(v);
        }
    }
    best.filter(|b| b.gain > 1e-15)
}

fn leaf_scores(class_w: &[f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let total: f64 = class_w.iter().sum();
    if total <= 0.0 {
        return [1.0 / N_CLASSES as f64; N_CLASSES];
    }
    std::array::from_fn(|c| class_w[c] / total)
}

/// Fits a shallow tree by best-first growth: at each step the pending leaf
/// with the largest impurity decrease is split, until [`MAX_BRANCH_NODES`]
/// branches exist or no positive-gain split remains.
pub fn tree_fit(
    features: &[Vec<f64>],
    labels: &[ManeuverKind],
    weights: &[f64],
    ctx: &SplitContext,
    max_branch: usize,
    rng: &mut StdRng,
) -> Result<DecisionTree> {
    if features.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if weights.iter().any(|w| *w < 0.0) || weights.iter().all(|w| *w == 0.0) {
        return Err(Error::DegenerateFeatures);
    }
    let n = features.len();
    let root_member = vec![true; n];
    let mut root_w = [0.0; N_CLASSES];
    for i in 0..n {
        root_w[labels[i].index()] += weights[i];
    }

    struct Pending {
        node: usize,
        member: Vec<bool>,
        split: SplitChoice,
    }

    let mut nodes = vec![Node::Leaf {
        scores: leaf_scores(&root_w),
    }];
    let mut pending: Vec<Pending> = Vec::new();
    if let Some(split) = best_split(features, labels, weights, &root_member, &root_w, ctx, rng) {
        pending.push(Pending {
            node: 0,
            member: root_member,
            split,
        });
    }
    let mut branches = 0;
    while branches < max_branch {
        let Some(pos) = pending
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.split.gain.total_cmp(&b.1.split.gain).then(b.0.cmp(&a.0)))
            .map(|(k, _)| k)
        else {
            break;
        };
        let p = pending.swap_remove(pos);
        let mut lm = vec![false; n];
        let mut rm = vec![false; n];
        let mut lw = [0.0; N_CLASSES];
        let mut rw = [0.0; N_CLASSES];
        for i in 0..n {
            if !p.member[i] {
                continue;
            }
            if features[i][p.split.feature] <= p.split.threshold {
                lm[i] = true;
                lw[labels[i].index()] += weights[i];
            } else {
                rm[i] = true;
                rw[labels[i].index()] += weights[i];
            }
        }
        let li = nodes.len();
        nodes.push(Node::Leaf {
            scores: leaf_scores(&lw),
        });
        let ri = nodes.len();
        nodes.push(Node::Leaf {
            scores: leaf_scores(&rw),
        });
        nodes[p.node] = Node::Branch {
            feature: p.split.feature,
            threshold: p.split.threshold,
            left: li,
            right: ri,
        };
        branches += 1;
        if branches >= max_branch {
            break;
        }
        for (node, member, class_w) in [(li, lm, lw), (ri, rm, rw)] {
            if let Some(split) = best_split(features, labels, weights, &member, &class_w, ctx, rng)
            {
                pending.push(Pending {
                    node,
                    member,
                    split,
                });
            }
        }
    }
    Ok(DecisionTree { nodes })
}

// ---------------------------------------------------------------------------
// AdaBoost.M2
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaBoostEnsemble {
    pub variant: FeatureVariant,
    pub trees: Vec<DecisionTree>,
    pub alphas: Vec<f64>,
    pub seed: u64,
}

/// Trains the boosted ensemble. `initial_mislabel` optionally seeds the
/// mislabel distribution D(i, y) (one row of wrong-label mass per sample);
/// by default it is uniform over all (sample, wrong-label) pairs.
pub fn adaboost_m2_fit(
    features: &[Vec<f64>],
    labels: &[ManeuverKind],
    variant: FeatureVariant,
    n_learners: usize,
    initial_mislabel: Option<&[[f64; N_CLASSES]]>,
    seed: u64,
) -> Result<AdaBoostEnsemble> {
    if features.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let classes_present = {
        let mut seen = [false; N_CLASSES];
        for l in labels {
            seen[l.index()] = true;
        }
        seen.iter().filter(|s| **s).count()
    };
    if classes_present < 2 {
        return Err(Error::ClassAbsent("need at least two classes"));
    }
    let n = features.len();
    let mut dist: Vec<[f64; N_CLASSES]> = match initial_mislabel {
        Some(d) => d.to_vec(),
        None => vec![[1.0; N_CLASSES]; n],
    };
    // zero out true-label mass and normalize
    let mut z = 0.0;
    for (row, l) in dist.iter_mut().zip(labels) {
        row[l.index()] = 0.0;
        z += row.iter().sum::<f64>();
    }
    if z <= 0.0 {
        return Err(Error::DegenerateFeatures);
    }
    for row in &mut dist {
        for v in row.iter_mut() {
            *v /= z;
        }
    }

    let ctx = SplitContext::new(features);
    let mut trees = Vec::with_capacity(n_learners);
    let mut alphas = Vec::with_capacity(n_learners);
    const MAX_ATTEMPTS: u64 = 10;
    for t in 0..n_learners as u64 {
        let mut accepted = false;
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = StdRng::seed_from_u64(
                seed ^ (t.wrapping_mul(0x9e3779b97f4a7c15)) ^ (attempt << 48),
            );
            let weights: Vec<f64> = dist.iter().map(|row| row.iter().sum()).collect();
            let tree = tree_fit(features, labels, &weights, &ctx, MAX_BRANCH_NODES, &mut rng)?;
            let h: Vec<[f64; N_CLASSES]> = features.iter().map(|f| tree.predict(f)).collect();
            let mut eps = 0.0;
            for i in 0..n {
                let ci = labels[i].index();
                for y in 0..N_CLASSES {
                    if y == ci {
                        continue;
                    }
                    eps += dist[i][y] * (1.0 - h[i][ci] + h[i][y]);
                }
            }
            eps *= 0.5;
            if eps >= 0.5 {
                continue; // discard; retry with re-randomized tie-breaks
            }
            let eps = eps.max(1e-10);
            let beta = eps / (1.0 - eps);
            let mut z = 0.0;
            for i in 0..n {
                let ci = labels[i].index();
                for y in 0..N_CLASSES {
                    if y == ci {
                        continue;
                    }
                    dist[i][y] *= beta.powf(0.5 * (1.0 + h[i][ci] - h[i][y]));
                    z += dist[i][y];
                }
            }
            for row in &mut dist {
                for v in row.iter_mut() {
                    *v /= z;
                }
            }
            trees.push(tree);
            alphas.push((1.0 / beta).ln());
            accepted = true;
            break;
        }
        if !accepted {
            return Err(Error::BoostingStalled);
        }
    }
    Ok(AdaBoostEnsemble {
        variant,
        trees,
        alphas,
        seed,
    })
}

/// Weighted vote y_c(f) = sum_n alpha_n h_n(f)_c; returns the argmax class
/// and the normalized score vector.
pub fn ensemble_predict(ens: &AdaBoostEnsemble, f: &[f64]) -> (ManeuverKind, [f64; N_CLASSES]) {
    let mut scores = [0.0; N_CLASSES];
    for (tree, &alpha) in ens.trees.iter().zip(&ens.alphas) {
        let h = tree.predict(f);
        for c in 0..N_CLASSES {
            scores[c] += alpha * h[c];
        }
    }
    let z: f64 = scores.iter().sum();
    if z > 0.0 {
        for s in &mut scores {
            *s /= z;
        }
    }
    (argmax_class(&scores), scores)
}

// ---------------------------------------------------------------------------
// Unified model + calibration
// ---------------------------------------------------------------------------

/// A trained classifier of either family.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Classifier {
    Gda(GdaModel),
    Bdt(AdaBoostEnsemble),
}

impl Classifier {
    pub fn variant(&self) -> FeatureVariant {
        match self {
            Classifier::Gda(m) => m.variant,
            Classifier::Bdt(m) => m.variant,
        }
    }

    pub fn predict(&self, f: &[f64]) -> (ManeuverKind, [f64; N_CLASSES]) {
        match self {
            Classifier::Gda(m) => gda_predict(m, f),
            Classifier::Bdt(m) => ensemble_predict(m, f),
        }
    }
}

/// Outcome of the LK miss-rate calibration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub multiplier: f64,
    pub achieved: f64,
    pub target: f64,
    pub converged: bool,
}

pub const CALIB_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const CALIB_TOL: f64 = 0.02;
pub const CALIB_MAX_ITERS: usize = 20;

/// Bisection in log space over a scalar multiplier on the LK class weight.
///
/// `trainer(mult)` must return a model whose LK emphasis grows with `mult`;
/// `missrate(model)` evaluates the validation LK miss rate, which is then
/// monotone non-increasing in `mult`. Stops when within `CALIB_TOL` of the
/// target or after `CALIB_MAX_ITERS` evaluations (best effort, unconverged).
/// If the target is outside what the multiplier bounds can reach, returns
/// `CalibrationFailed`.
pub fn calibrate_lk_missrate<M>(
    mut trainer: impl FnMut(f64) -> Result<M>,
    missrate: impl Fn(&M) -> f64,
    target: f64,
) -> Result<(M, CalibrationRecord)> {
    let (mut lo, mut hi) = CALIB_BOUNDS;
    let mut best: Option<(M, f64, f64)> = None; // model, mult, achieved

    let eval = |mult: f64,
                    trainer: &mut dyn FnMut(f64) -> Result<M>,
                    best: &mut Option<(M, f64, f64)>|
     -> Result<f64> {
        let model = trainer(mult)?;
        let mr = missrate(&model);
        if best
            .as_ref()
            .map_or(true, |(_, _, b)| (mr - target).abs() < (b - target).abs())
        {
            *best = Some((model, mult, mr));
        }
        Ok(mr)
    };

    let mr_lo = eval(lo, &mut trainer, &mut best)?;
    if (mr_lo - target).abs() > CALIB_TOL {
        let mr_hi = eval(hi, &mut trainer, &mut best)?;
        // miss rate decreases with the multiplier: reachable targets lie in
        // [mr_hi, mr_lo]
        if target > mr_lo + CALIB_TOL || target < mr_hi - CALIB_TOL {
            let (_, _, achieved) = best.unwrap();
            return Err(Error::CalibrationFailed { target, achieved });
        }
        if (mr_hi - target).abs() > CALIB_TOL {
            for _ in 0..CALIB_MAX_ITERS {
                let mid = ((lo.ln() + hi.ln()) / 2.0).exp();
                let mr = eval(mid, &mut trainer, &mut best)?;
                if (mr - target).abs() <= CALIB_TOL {
                    break;
                }
                if mr > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
    }
    let (model, multiplier, achieved) = best.unwrap();
    let converged = (achieved - target).abs() <= CALIB_TOL;
    Ok((
        model,
        CalibrationRecord {
            multiplier,
            achieved,
            target,
            converged,
        },
    ))
}

/// Initial mislabel distribution with the LK rows scaled by `mult`.
pub fn lk_weighted_mislabel(labels: &[ManeuverKind], mult: f64) -> Vec<[f64; N_CLASSES]> {
    labels
        .iter()
        .map(|l| {
            let w = if *l == ManeuverKind::Lk { mult } else { 1.0 };
            [w; N_CLASSES]
        })
        .collect()
}
