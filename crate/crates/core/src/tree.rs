//! The decision-tree proxy: growth loop, routing, and exact
//! leaf-membership weights.
//!
//! Vertices are identified by binary strings with root "0"; a split
//! replaces leaf V with children V0 and V1. Routing convention: h(x) = 1
//! routes to the child ending in 1, and the child-1 weight multiplies by
//! E[h̃(x)].

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{base_rates, LabeledDataset, TargetDistribution, WeightedView};
use crate::geometry::{check_progress, project_to_hull, ConditionalMatrix, HullProjection};
use crate::sampler::Proxy;
use crate::splitter::{learn_split, RandomizedSplitter, SplitParams};
use crate::{par, Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Internal { splitter: RandomizedSplitter },
    Leaf,
}

/// Binary proxy tree; leaves are the proxy groups.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProxyTree {
    /// Prefix-closed binary-string ids; root is "0".
    pub nodes: BTreeMap<String, Node>,
    pub feature_dim: usize,
    /// Serialization format version.
    pub version: u32,
}

impl ProxyTree {
    pub fn root_only(feature_dim: usize) -> ProxyTree {
        let mut nodes = BTreeMap::new();
        nodes.insert("0".to_string(), Node::Leaf);
        ProxyTree {
            nodes,
            feature_dim,
            version: 1,
        }
    }

    /// Leaf ids in lexicographic order; row j of the conditional matrix
    /// and plan entry j refer to `leaves()[j]`.
    pub fn leaves(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|(_, n)| matches!(n, Node::Leaf))
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    /// Maximum leaf depth (root has depth 0).
    pub fn height(&self) -> usize {
        self.leaves().iter().map(|id| id.len() - 1).max().unwrap_or(0)
    }

    /// Replaces leaf `id` with an internal node and two fresh leaves.
    pub fn split_leaf(&mut self, id: &str, splitter: RandomizedSplitter) -> Result<()> {
        match self.nodes.get(id) {
            Some(Node::Leaf) => {}
            _ => return Err(Error::Contract(format!("{id} is not a leaf"))),
        }
        self.nodes.insert(id.to_string(), Node::Internal { splitter });
        self.nodes.insert(format!("{id}0"), Node::Leaf);
        self.nodes.insert(format!("{id}1"), Node::Leaf);
        Ok(())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_dim {
            return Err(Error::Contract(format!(
                "feature vector has {} dims, tree expects {}",
                x.len(),
                self.feature_dim
            )));
        }
        Ok(())
    }

    /// Routes x to a leaf, drawing one deterministic hypothesis per
    /// internal node from the seeded RNG. Deterministic given (x, seed).
    pub fn classify(&self, x: &[f64], rng_seed: u64) -> Result<usize> {
        self.check_dim(x)?;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        Ok(self.route(x, &mut rng))
    }

    fn route(&self, x: &[f64], rng: &mut ChaCha8Rng) -> usize {
        let mut id = String::from("0");
        loop {
            match &self.nodes[&id] {
                Node::Leaf => {
                    return self.leaves().iter().position(|l| *l == id).unwrap();
                }
                Node::Internal { splitter } => {
                    let pick = splitter.draw(rng.gen_range(0.0..1.0));
                    let bit = splitter.hypotheses[pick].predict(x);
                    id.push(if bit == 1 { '1' } else { '0' });
                }
            }
        }
    }

    /// Exact leaf-membership probabilities of x under the randomized
    /// tree, in leaf order; sums to 1.
    pub fn membership_weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let leaves = self.leaves();
        let mut out = Vec::with_capacity(leaves.len());
        for leaf in &leaves {
            let mut w = 1.0;
            // Walk the path, multiplying by E[h̃] toward child 1 and
            // 1 - E[h̃] toward child 0.
            for depth in 1..leaf.len() {
                let parent = &leaf[..depth];
                let expected = match &self.nodes[parent] {
                    Node::Internal { splitter } => splitter.expected(x),
                    Node::Leaf => unreachable!("leaf on interior path"),
                };
                let bit = leaf.as_bytes()[depth];
                w *= if bit == b'1' { expected } else { 1.0 - expected };
            }
            out.push(w);
        }
        Ok(out)
    }
}

impl Proxy for ProxyTree {
    fn range_size(&self) -> usize {
        self.leaf_count()
    }

    fn assign(&self, x: &[f64], rng: &mut ChaCha8Rng) -> usize {
        self.route(x, rng)
    }

    fn group_names(&self) -> Vec<String> {
        self.leaves().iter().map(|s| s.to_string()).collect()
    }
}

/// Estimates the conditional matrix from exact membership weights.
/// Leaves with zero mass are dropped from the matrix.
pub fn estimate_conditional_matrix(
    tree: &ProxyTree,
    ds: &LabeledDataset,
) -> Result<ConditionalMatrix> {
    let leaves: Vec<String> = tree.leaves().iter().map(|s| s.to_string()).collect();
    let l = leaves.len();
    let k = ds.group_count;
    let mut mass = vec![0.0; l];
    let mut counts = vec![vec![0.0; k]; l];
    for (x, &zi) in ds.features.iter().zip(&ds.sensitive) {
        let w = tree.membership_weights(x)?;
        for j in 0..l {
            mass[j] += w[j];
            counts[j][zi] += w[j];
        }
    }
    let n = ds.len() as f64;
    let mut rows = Vec::new();
    let mut leaf_mass = Vec::new();
    let mut leaf_ids = Vec::new();
    for j in 0..l {
        if mass[j] <= 1e-9 {
            continue;
        }
        rows.push(counts[j].iter().map(|c| c / mass[j]).collect());
        leaf_mass.push(mass[j] / n);
        leaf_ids.push(leaves[j].clone());
    }
    // Renormalize the tiny deficit from dropped leaves.
    let total: f64 = leaf_mass.iter().sum();
    for m in &mut leaf_mass {
        *m /= total;
    }
    let a = ConditionalMatrix {
        rows,
        leaf_mass,
        leaf_ids,
    };
    a.validate()?;
    Ok(a)
}

/// One growth round in the trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub leaf_id: Option<String>,
    pub dist_before: f64,
    pub dist_after: Option<f64>,
    pub accepted: bool,
    pub slacks: Option<Vec<f64>>,
}

/// Observability record for a growth run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GrowthTrace {
    pub rounds: Vec<RoundRecord>,
    pub notes: Vec<String>,
    pub final_distance: f64,
    pub accepted_splits: usize,
}

/// Growth configuration; defaults follow the artifact's standard settings
/// (gamma 0.1, height cap 20, stopping distance 0.1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub max_height: usize,
    pub stop_distance: f64,
    pub t_cap: usize,
    /// Minimum weighted sample mass a leaf needs to be split.
    pub min_leaf_mass: f64,
    /// Reserved for stochastic oracles; growth with the deterministic PRC
    /// oracle does not consume randomness.
    pub seed: u64,
}

impl Default for GrowConfig {
    fn default() -> Self {
        GrowConfig {
            alpha: 0.1,
            epsilon: 0.05,
            gamma: 0.1,
            max_height: 20,
            stop_distance: 0.1,
            t_cap: 2_000,
            min_leaf_mass: 50.0,
            seed: 0,
        }
    }
}

pub struct GrowResult {
    pub tree: ProxyTree,
    pub matrix: ConditionalMatrix,
    pub trace: GrowthTrace,
}

const SOLVER_TOL: f64 = 1e-6;

fn matrix_from_views(
    views: &BTreeMap<String, Vec<f64>>,
    ds: &LabeledDataset,
    notes: &mut Vec<String>,
) -> ConditionalMatrix {
    let n = ds.len() as f64;
    let mut rows = Vec::new();
    let mut leaf_mass = Vec::new();
    let mut leaf_ids = Vec::new();
    for (id, weights) in views {
        let mass: f64 = weights.iter().sum();
        if mass <= 1e-9 {
            notes.push(format!("leaf {id} dropped from A (zero mass)"));
            continue;
        }
        let mut row = vec![0.0; ds.group_count];
        for (&zi, &w) in ds.sensitive.iter().zip(weights) {
            row[zi] += w;
        }
        for r in &mut row {
            *r /= mass;
        }
        rows.push(row);
        leaf_mass.push(mass / n);
        leaf_ids.push(id.clone());
    }
    let total: f64 = leaf_mass.iter().sum();
    for m in &mut leaf_mass {
        *m /= total;
    }
    ConditionalMatrix {
        rows,
        leaf_mass,
        leaf_ids,
    }
}

fn project_or_best(
    a: &ConditionalMatrix,
    u: &TargetDistribution,
    notes: &mut Vec<String>,
) -> Result<HullProjection> {
    match project_to_hull(a, u, SOLVER_TOL) {
        Ok(p) => Ok(p),
        Err(Error::SolverStalled { best, movement, .. }) => {
            notes.push(format!("projection stalled (movement {movement:e}); using best iterate"));
            Ok(best)
        }
        Err(e) => Err(e),
    }
}

/// Grows the proxy tree: while the target sits outside the hull, try a
/// feasible split on every eligible leaf, accept the one with the
/// greatest certified distance reduction, and re-estimate the matrix.
/// Early termination (no acceptable split) is a normal outcome.
pub fn grow_tree(
    ds: &LabeledDataset,
    u: &TargetDistribution,
    cfg: &GrowConfig,
) -> Result<GrowResult> {
    ds.validate()?;
    if cfg.max_height < 1 {
        return Err(Error::Domain("max_height must be at least 1".into()));
    }
    let rates = base_rates(ds)?;
    let mut tree = ProxyTree::root_only(ds.dim());
    let mut views: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    views.insert("0".into(), vec![1.0; ds.len()]);
    let mut trace = GrowthTrace::default();

    loop {
        let a = matrix_from_views(&views, ds, &mut trace.notes);
        let proj = project_or_best(&a, u, &mut trace.notes)?;
        let dist = proj.distance;
        trace.final_distance = dist;
        if dist <= cfg.stop_distance {
            trace.notes.push(format!("stopped: distance {dist:.6} within target"));
            return Ok(GrowResult { tree, matrix: a, trace });
        }

        let candidates: Vec<(String, Vec<f64>)> = views
            .iter()
            .filter(|(id, w)| {
                id.len() - 1 < cfg.max_height && w.iter().sum::<f64>() >= cfg.min_leaf_mass
            })
            .map(|(id, w)| (id.clone(), w.clone()))
            .collect();
        if candidates.is_empty() {
            trace.notes.push("stopped: no splittable leaf".into());
            return Ok(GrowResult { tree, matrix: a, trace });
        }

        let params = SplitParams {
            alpha: cfg.alpha,
            epsilon: cfg.epsilon,
            gamma: cfg.gamma,
            t_cap: cfg.t_cap,
        };
        // Candidate evaluations touch disjoint state; results merge by the
        // deterministic tie-break below.
        let evaluated = par::map_collect(candidates, |(id, weights)| {
            let view = WeightedView {
                weights,
                vertex_id: id.clone(),
            };
            let outcome = match learn_split(&view, ds, &proj, u, &rates, &params) {
                Ok(o) => o,
                Err(_) => return (id, None),
            };
            if !outcome.feasible {
                return (id, None);
            }
            let w1: Vec<f64> = view
                .weights
                .iter()
                .zip(&outcome.mixture_probs)
                .map(|(w, p)| w * p)
                .collect();
            let w0: Vec<f64> = view
                .weights
                .iter()
                .zip(&outcome.mixture_probs)
                .map(|(w, p)| w * (1.0 - p))
                .collect();
            let mut trial_views = views.clone();
            trial_views.remove(&id);
            trial_views.insert(format!("{id}0"), w0);
            trial_views.insert(format!("{id}1"), w1);
            let mut scratch = Vec::new();
            let trial_a = matrix_from_views(&trial_views, ds, &mut scratch);
            let dist_after = match project_or_best(&trial_a, u, &mut scratch) {
                Ok(p) => p.distance,
                Err(_) => return (id, None),
            };
            (id, Some((outcome, dist_after)))
        });

        // Greedy-best split passing the progress certificate; ties broken
        // by lexicographically smallest leaf id (BTreeMap order is stable).
        let round = trace.rounds.len() + 1;
        let mut best: Option<(String, crate::splitter::SplitOutcome, f64)> = None;
        for (id, result) in evaluated {
            if let Some((outcome, dist_after)) = result {
                if check_progress(dist, dist_after, cfg.gamma) {
                    let better = match &best {
                        None => true,
                        Some((bid, _, bdist)) => {
                            dist_after < *bdist - 1e-15
                                || ((dist_after - bdist).abs() <= 1e-15 && id < *bid)
                        }
                    };
                    if better {
                        best = Some((id, outcome, dist_after));
                    }
                }
            }
        }

        match best {
            None => {
                trace.rounds.push(RoundRecord {
                    round,
                    leaf_id: None,
                    dist_before: dist,
                    dist_after: None,
                    accepted: false,
                    slacks: None,
                });
                trace.notes.push("stopped: no split certified progress".into());
                return Ok(GrowResult { tree, matrix: a, trace });
            }
            Some((id, outcome, dist_after)) => {
                let weights = views.remove(&id).expect("candidate view");
                let w1: Vec<f64> = weights
                    .iter()
                    .zip(&outcome.mixture_probs)
                    .map(|(w, p)| w * p)
                    .collect();
                let w0: Vec<f64> = weights
                    .iter()
                    .zip(&outcome.mixture_probs)
                    .map(|(w, p)| w * (1.0 - p))
                    .collect();
                views.insert(format!("{id}0"), w0);
                views.insert(format!("{id}1"), w1);
                tree.split_leaf(&id, outcome.splitter)?;
                trace.rounds.push(RoundRecord {
                    round,
                    leaf_id: Some(id),
                    dist_before: dist,
                    dist_after: Some(dist_after),
                    accepted: true,
                    slacks: Some(outcome.slacks),
                });
                trace.accepted_splits += 1;
            }
        }
    }
}
