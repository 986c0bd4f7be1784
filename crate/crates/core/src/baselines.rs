//! Comparison proxies that directly predict the sensitive attribute:
//! multinomial softmax regression and a small CART tree, with the naive
//! (equal counts per predicted group) and QP (residual-minimizing)
//! acceptance plans on top.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, TargetDistribution};
use crate::geometry::ConditionalMatrix;
use crate::sampler::{derive_plan, plan_from_weights, PlanMode, Proxy, SamplingPlan};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectKind {
    Softmax,
    Cart,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Model {
    /// K rows of p+1 coefficients (intercept last).
    Softmax { weights: Vec<Vec<f64>> },
    Cart { nodes: Vec<CartNode> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
enum CartNode {
    Split {
        feature: usize,
        threshold: f64,
        /// Child node indices: left takes x[feature] <= threshold.
        left: usize,
        right: usize,
    },
    Leaf {
        class: usize,
    },
}

/// A classifier for the sensitive attribute itself; the baselines treat
/// its predictions as proxy groups.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectClassifier {
    pub group_count: usize,
    model: Model,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectHyper {
    pub epochs: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
}

impl Default for DirectHyper {
    fn default() -> Self {
        DirectHyper {
            epochs: 500,
            learning_rate: 0.1,
            max_depth: 8,
        }
    }
}

pub fn train_direct(
    ds: &LabeledDataset,
    kind: DirectKind,
    hyper: &DirectHyper,
) -> Result<DirectClassifier> {
    ds.validate()?;
    let model = match kind {
        DirectKind::Softmax => train_softmax(ds, hyper),
        DirectKind::Cart => train_cart(ds, hyper),
    };
    Ok(DirectClassifier {
        group_count: ds.group_count,
        model,
    })
}

fn softmax_scores(weights: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .map(|w| {
            let (coef, b) = w.split_at(w.len() - 1);
            coef.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b[0]
        })
        .collect()
}

fn softmax_probs(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Full-batch gradient descent on multinomial cross-entropy; zero init,
/// fixed epochs and rate, no regularization. Deterministic.
fn train_softmax(ds: &LabeledDataset, hyper: &DirectHyper) -> Model {
    let n = ds.len();
    let p = ds.dim();
    let k = ds.group_count;
    let mut weights = vec![vec![0.0; p + 1]; k];
    for _ in 0..hyper.epochs {
        let mut grad = vec![vec![0.0; p + 1]; k];
        for (x, &z) in ds.features.iter().zip(&ds.sensitive) {
            let probs = softmax_probs(&softmax_scores(&weights, x));
            for (c, g) in grad.iter_mut().enumerate() {
                let err = probs[c] - f64::from(u8::from(c == z));
                for (gj, xj) in g.iter_mut().zip(x) {
                    *gj += err * xj;
                }
                g[p] += err;
            }
        }
        for (w, g) in weights.iter_mut().zip(&grad) {
            for (wj, gj) in w.iter_mut().zip(g) {
                *wj -= hyper.learning_rate * gj / n as f64;
            }
        }
    }
    Model::Softmax { weights }
}

fn gini(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Greedy Gini CART on the sensitive attribute, depth-capped,
/// midpoint thresholds. Deterministic (first best split wins).
fn train_cart(ds: &LabeledDataset, hyper: &DirectHyper) -> Model {
    let mut nodes = Vec::new();
    let idx: Vec<usize> = (0..ds.len()).collect();
    build_cart(ds, &idx, hyper.max_depth, &mut nodes);
    Model::Cart { nodes }
}

fn build_cart(ds: &LabeledDataset, idx: &[usize], depth: usize, nodes: &mut Vec<CartNode>) -> usize {
    let k = ds.group_count;
    let mut counts = vec![0usize; k];
    for &i in idx {
        counts[ds.sensitive[i]] += 1;
    }
    let node_gini = gini(&counts);
    if depth == 0 || idx.len() < 2 || node_gini == 0.0 {
        nodes.push(CartNode::Leaf {
            class: majority(&counts),
        });
        return nodes.len() - 1;
    }

    let mut best: Option<(f64, usize, f64)> = None; // (impurity, feature, threshold)
    for feature in 0..ds.dim() {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| {
            ds.features[a][feature]
                .partial_cmp(&ds.features[b][feature])
                .unwrap()
        });
        let mut left = vec![0usize; k];
        let mut right = counts.clone();
        let total = idx.len() as f64;
        for w in 0..order.len() - 1 {
            let z = ds.sensitive[order[w]];
            left[z] += 1;
            right[z] -= 1;
            let a = ds.features[order[w]][feature];
            let b = ds.features[order[w + 1]][feature];
            if a == b {
                continue;
            }
            let nl = (w + 1) as f64;
            let nr = total - nl;
            let impurity = (nl * gini(&left) + nr * gini(&right)) / total;
            if best.is_none_or(|(bi, _, _)| impurity < bi - 1e-12) {
                best = Some((impurity, feature, (a + b) / 2.0));
            }
        }
    }

    match best {
        Some((impurity, feature, threshold)) if impurity < node_gini - 1e-12 => {
            let (li, ri): (Vec<usize>, Vec<usize>) = idx
                .iter()
                .partition(|&&i| ds.features[i][feature] <= threshold);
            let slot = nodes.len();
            nodes.push(CartNode::Leaf { class: 0 }); // placeholder
            let left = build_cart(ds, &li, depth - 1, nodes);
            let right = build_cart(ds, &ri, depth - 1, nodes);
            nodes[slot] = CartNode::Split {
                feature,
                threshold,
                left,
                right,
            };
            slot
        }
        _ => {
            nodes.push(CartNode::Leaf {
                class: majority(&counts),
            });
            nodes.len() - 1
        }
    }
}

impl DirectClassifier {
    pub fn predict(&self, x: &[f64]) -> usize {
        match &self.model {
            Model::Softmax { weights } => {
                let scores = softmax_scores(weights, x);
                scores
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            }
            Model::Cart { nodes } => {
                let mut at = 0usize;
                loop {
                    match &nodes[at] {
                        CartNode::Leaf { class } => return *class,
                        CartNode::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            at = if x[*feature] <= *threshold { *left } else { *right };
                        }
                    }
                }
            }
        }
    }
}

impl Proxy for DirectClassifier {
    fn range_size(&self) -> usize {
        self.group_count
    }

    fn assign(&self, x: &[f64], _rng: &mut ChaCha8Rng) -> usize {
        self.predict(x)
    }
}

/// Conditional matrix of true groups within each predicted group; empty
/// predicted groups are dropped.
pub fn prediction_matrix(clf: &DirectClassifier, ds: &LabeledDataset) -> Result<ConditionalMatrix> {
    let k = ds.group_count;
    let range = clf.group_count;
    let mut cells = vec![0.0; range];
    let mut joint = vec![vec![0.0; k]; range];
    for (x, &z) in ds.features.iter().zip(&ds.sensitive) {
        let j = clf.predict(x);
        cells[j] += 1.0;
        joint[j][z] += 1.0;
    }
    let n = ds.len() as f64;
    let mut rows = Vec::new();
    let mut leaf_mass = Vec::new();
    let mut leaf_ids = Vec::new();
    for j in 0..range {
        if cells[j] == 0.0 {
            continue;
        }
        rows.push(joint[j].iter().map(|c| c / cells[j]).collect());
        leaf_mass.push(cells[j] / n);
        leaf_ids.push(j.to_string());
    }
    let a = ConditionalMatrix {
        rows,
        leaf_mass,
        leaf_ids,
    };
    a.validate()?;
    Ok(a)
}

/// Equal expected accepted counts per predicted group: rho_j inversely
/// proportional to the group's share of predictions, max scaled to 1.
pub fn naive_plan(clf: &DirectClassifier, ds: &LabeledDataset) -> Result<SamplingPlan> {
    naive_plan_from_matrix(&prediction_matrix(clf, ds)?)
}

/// Naive plan over an already-built conditional matrix: uniform mixing
/// weights, i.e. rho inversely proportional to cell mass.
pub fn naive_plan_from_matrix(a: &ConditionalMatrix) -> Result<SamplingPlan> {
    let l = a.leaf_count();
    let q = vec![1.0 / l as f64; l];
    plan_from_weights(a, q, PlanMode::Strict)
}

/// QP plan over an already-built conditional matrix.
pub fn qp_plan_from_matrix(
    a: &ConditionalMatrix,
    u: &TargetDistribution,
) -> Result<SamplingPlan> {
    derive_plan(a, u, PlanMode::Strict)
}

/// Residual-minimizing plan over the predicted-group conditional matrix.
pub fn qp_plan(
    clf: &DirectClassifier,
    ds: &LabeledDataset,
    u: &TargetDistribution,
    relaxed: bool,
) -> Result<SamplingPlan> {
    let a = prediction_matrix(clf, ds)?;
    if u.len() != a.group_count() {
        return Err(Error::Domain("target length does not match matrix".into()));
    }
    let mode = if relaxed { PlanMode::Relaxed } else { PlanMode::Strict };
    derive_plan(&a, u, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::base_rates;
    use crate::geometry::l2_dist;
    use crate::sampler::induced_distribution;
    use crate::synth;

    fn accuracy(clf: &DirectClassifier, ds: &LabeledDataset) -> f64 {
        let hits = ds
            .features
            .iter()
            .zip(&ds.sensitive)
            .filter(|(x, &z)| clf.predict(x) == z)
            .count();
        hits as f64 / ds.len() as f64
    }

    #[test]
    fn separable_fixture_reaches_full_accuracy() {
        let ds = synth::two_group_separable(200, 0.7, 11);
        for kind in [DirectKind::Softmax, DirectKind::Cart] {
            let clf = train_direct(&ds, kind, &DirectHyper::default()).unwrap();
            assert_eq!(accuracy(&clf, &ds), 1.0, "{kind:?}");
        }
    }

    #[test]
    fn constant_features_predict_majority() {
        let mut ds = synth::two_group_separable(100, 0.8, 13);
        for row in &mut ds.features {
            row.fill(0.5);
        }
        for kind in [DirectKind::Softmax, DirectKind::Cart] {
            let clf = train_direct(&ds, kind, &DirectHyper::default()).unwrap();
            let majority = {
                let r = base_rates(&ds).unwrap().rates;
                usize::from(r[1] > r[0])
            };
            for x in ds.features.iter().take(10) {
                assert_eq!(clf.predict(x), majority, "{kind:?}");
            }
        }
    }

    #[test]
    fn cart_root_split_matches_optimal_threshold() {
        // Balanced 1-d data, groups separated at 0: every prediction must
        // agree with the optimal threshold classifier.
        let n = 100;
        let features: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![i as f64 / n as f64 - 0.5 + 0.005])
            .collect();
        let sensitive: Vec<usize> = features.iter().map(|x| usize::from(x[0] > 0.0)).collect();
        let ds = LabeledDataset {
            labels: vec![0; n],
            feature_names: vec!["x".into()],
            group_names: vec!["a".into(), "b".into()],
            group_count: 2,
            features,
            sensitive,
        };
        let clf = train_direct(&ds, DirectKind::Cart, &DirectHyper::default()).unwrap();
        assert_eq!(accuracy(&clf, &ds), 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = synth::correlated_groups(150, 3, 0.6, 21);
        for kind in [DirectKind::Softmax, DirectKind::Cart] {
            let a = train_direct(&ds, kind, &DirectHyper::default()).unwrap();
            let b = train_direct(&ds, kind, &DirectHyper::default()).unwrap();
            assert_eq!(
                serde_json::to_string(&a).unwrap(),
                serde_json::to_string(&b).unwrap()
            );
        }
    }

    #[test]
    fn naive_plan_inverse_rates() {
        // Perfect classifier on a 3:1 skew: rho = (1/3, 1).
        let ds = synth::two_group_separable(400, 0.75, 3);
        let clf = train_direct(&ds, DirectKind::Cart, &DirectHyper::default()).unwrap();
        let plan = naive_plan(&clf, &ds).unwrap();
        let r = base_rates(&ds).unwrap().rates;
        let expect0 = (r[1] / r[0]).min(1.0);
        assert!((plan.rho[0] - expect0).abs() < 1e-9);
        assert!((plan.rho[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn naive_plan_uniform_predictions_keep_everything() {
        let ds = synth::two_group_separable(300, 0.5, 8);
        let clf = train_direct(&ds, DirectKind::Cart, &DirectHyper::default()).unwrap();
        let plan = naive_plan(&clf, &ds).unwrap();
        let r = base_rates(&ds).unwrap().rates;
        // Groups are near-balanced, so both rho are near 1; the smaller
        // equals min(r)/max(r) exactly.
        let expect = (r[0].min(r[1]) / r[0].max(r[1])).min(1.0);
        let lo = plan.rho.iter().cloned().fold(1.0, f64::min);
        assert!((lo - expect).abs() < 1e-9);
    }

    #[test]
    fn naive_plan_three_group_hand_computation() {
        // r = (0.5, 0.3, 0.2) exactly: rho = (0.4, 2/3, 1).
        let n = 100;
        let sensitive: Vec<usize> = (0..n)
            .map(|i| if i < 50 { 0 } else if i < 80 { 1 } else { 2 })
            .collect();
        let features: Vec<Vec<f64>> = sensitive.iter().map(|&z| vec![z as f64]).collect();
        let ds = LabeledDataset {
            labels: vec![0; n],
            feature_names: vec!["x".into()],
            group_names: vec!["a".into(), "b".into(), "c".into()],
            group_count: 3,
            features,
            sensitive,
        };
        let clf = train_direct(&ds, DirectKind::Cart, &DirectHyper::default()).unwrap();
        assert_eq!(accuracy(&clf, &ds), 1.0);
        let plan = naive_plan(&clf, &ds).unwrap();
        assert!((plan.rho[0] - 0.4).abs() < 1e-9);
        assert!((plan.rho[1] - 2.0 / 3.0).abs() < 1e-9);
        assert!((plan.rho[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qp_plan_perfect_classifier_balances() {
        let ds = synth::two_group_separable(400, 0.8, 5);
        let clf = train_direct(&ds, DirectKind::Cart, &DirectHyper::default()).unwrap();
        let u = TargetDistribution::uniform(2);
        let plan = qp_plan(&clf, &ds, &u, false).unwrap();
        let a = prediction_matrix(&clf, &ds).unwrap();
        let induced = induced_distribution(&plan, &a).unwrap();
        assert!(l2_dist(&induced, u.vector()) < 1e-5);
    }

    #[test]
    fn constant_classifier_gives_single_cell_plan() {
        let mut ds = synth::two_group_separable(100, 0.7, 9);
        for row in &mut ds.features {
            row.fill(0.0);
        }
        let clf = train_direct(&ds, DirectKind::Cart, &DirectHyper::default()).unwrap();
        let plan = naive_plan(&clf, &ds).unwrap();
        assert_eq!(plan.rho, vec![1.0]);
    }

    #[test]
    fn qp_never_worse_than_naive() {
        // The naive weighting (uniform q) is feasible for the strict QP,
        // so the QP's induced distance can only be smaller.
        for seed in 0..10 {
            let ds = synth::correlated_groups(300, 3, 0.5, seed);
            let clf = train_direct(&ds, DirectKind::Cart, &DirectHyper::default()).unwrap();
            let u = TargetDistribution::uniform(3);
            let a = prediction_matrix(&clf, &ds).unwrap();
            let naive = naive_plan(&clf, &ds).unwrap();
            let qp = qp_plan(&clf, &ds, &u, false).unwrap();
            let d_naive = l2_dist(&induced_distribution(&naive, &a).unwrap(), u.vector());
            let d_qp = l2_dist(&induced_distribution(&qp, &a).unwrap(), u.vector());
            assert!(d_qp <= d_naive + 1e-6, "seed {seed}: {d_qp} vs {d_naive}");
        }
    }

    #[test]
    fn classifier_round_trips_through_json() {
        let ds = synth::correlated_groups(150, 2, 0.7, 2);
        let clf = train_direct(&ds, DirectKind::Softmax, &DirectHyper::default()).unwrap();
        let json = serde_json::to_string(&clf).unwrap();
        let back: DirectClassifier = serde_json::from_str(&json).unwrap();
        for x in ds.features.iter().take(30) {
            assert_eq!(clf.predict(x), back.predict(x));
        }
    }
}
