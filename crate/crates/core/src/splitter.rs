//! Learning one splitting function by simulating the zero-sum Lagrangian
//! game: the Learner best-responds through the PRC cost-sensitive oracle,
//! the Auditor runs online projected gradient ascent on the dual vector.
//!
//! The dual vector has 4K entries, four per sensitive group, matching the
//! four constraint families (split-side and complement-side, upper and
//! lower posterior gaps).

use crate::csc::{LinearThresholdHypothesis, PrcSolver};
use crate::dataset::{BaseRates, LabeledDataset, TargetDistribution, WeightedView};
use crate::geometry::{split_objective_constant, HullProjection};
use crate::{Error, Result};

use serde::{Deserialize, Serialize};

/// Dual state of the Auditor: nonnegative, norm-capped.
#[derive(Debug, Clone)]
pub struct DualState {
    /// Length 4K; per group k the block order is (split-side upper,
    /// complement-side upper, split-side lower, complement-side lower).
    pub lambda: Vec<f64>,
    pub lambda_max: f64,
}

impl DualState {
    pub fn new(group_count: usize, lambda_max: f64) -> DualState {
        DualState {
            lambda: vec![0.0; 4 * group_count],
            lambda_max,
        }
    }

    /// Ascent step followed by the two projections: componentwise clip to
    /// the nonnegative orthant, then norm clip to `lambda_max`.
    pub fn ascend(&mut self, gradient: &[f64], rate: f64) {
        for (l, g) in self.lambda.iter_mut().zip(gradient) {
            *l = (*l + rate * g).max(0.0);
        }
        let norm = self.lambda.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > self.lambda_max {
            let scale = self.lambda_max / norm;
            for l in &mut self.lambda {
                *l *= scale;
            }
        }
    }
}

/// A weighted mixture over deterministic splitting hypotheses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomizedSplitter {
    pub hypotheses: Vec<LinearThresholdHypothesis>,
    /// Mixture weights; nonnegative, sum 1, same length as `hypotheses`.
    pub weights: Vec<f64>,
}

impl RandomizedSplitter {
    pub fn uniform(hypotheses: Vec<LinearThresholdHypothesis>) -> RandomizedSplitter {
        let w = 1.0 / hypotheses.len() as f64;
        let weights = vec![w; hypotheses.len()];
        RandomizedSplitter {
            hypotheses,
            weights,
        }
    }

    /// E[h̃(x)]: the mixture probability of routing x to child 1.
    pub fn expected(&self, x: &[f64]) -> f64 {
        self.hypotheses
            .iter()
            .zip(&self.weights)
            .map(|(h, w)| w * h.predict(x) as f64)
            .sum()
    }

    /// Draws a component index according to the mixture weights.
    pub fn draw(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.weights.len() - 1
    }
}

/// Evaluates the Lagrangian at a (possibly mixed) splitter given by its
/// per-sample expectations.
#[allow(clippy::too_many_arguments)]
pub fn lagrangian_value(
    view: &WeightedView,
    z: &[usize],
    splitter_probs: &[f64],
    dual: &DualState,
    q_const: f64,
    proj: &HullProjection,
    u: &TargetDistribution,
    rates: &BaseRates,
    alpha: f64,
) -> f64 {
    let target = u.vector();
    let k_count = rates.rates.len();
    let mut total = 0.0;
    for ((&w, &zi), &p) in view.weights.iter().zip(z).zip(splitter_probs) {
        if w == 0.0 {
            continue;
        }
        let mut term = p * (-q_const + proj.point[zi] - target[zi]);
        for k in 0..k_count {
            let ind = f64::from(zi == k);
            let upper = ind - rates.rates[k] - alpha;
            let lower = rates.rates[k] - ind - alpha;
            let l = &dual.lambda[4 * k..4 * k + 4];
            term += (l[0] * p + l[1] * (1.0 - p)) * upper;
            term += (l[2] * p + l[3] * (1.0 - p)) * lower;
        }
        total += w * term;
    }
    total
}

/// Per-constraint slack values: the coefficients of each dual entry in the
/// Lagrangian, i.e. the gradient of L with respect to lambda.
pub fn dual_gradient(
    weights: &[f64],
    z: &[usize],
    splitter_probs: &[f64],
    rates: &BaseRates,
    alpha: f64,
) -> Vec<f64> {
    let k_count = rates.rates.len();
    let mut grad = vec![0.0; 4 * k_count];
    for ((&w, &zi), &p) in weights.iter().zip(z).zip(splitter_probs) {
        if w == 0.0 {
            continue;
        }
        for k in 0..k_count {
            let ind = f64::from(zi == k);
            let upper = ind - rates.rates[k] - alpha;
            let lower = rates.rates[k] - ind - alpha;
            grad[4 * k] += w * p * upper;
            grad[4 * k + 1] += w * (1.0 - p) * upper;
            grad[4 * k + 2] += w * p * lower;
            grad[4 * k + 3] += w * (1.0 - p) * lower;
        }
    }
    grad
}

/// Builds the per-sample cost of labeling 1 under the current dual state.
/// Costs are unweighted; the oracle applies sample weights itself.
fn label_one_costs(
    z: &[usize],
    dual: &DualState,
    q_const: f64,
    proj: &HullProjection,
    u: &TargetDistribution,
    rates: &BaseRates,
    alpha: f64,
) -> Vec<f64> {
    let target = u.vector();
    let k_count = rates.rates.len();
    // c1(x) = -Q + (U'-U)_z + sum_k (l0-l1)(1[z=k]-r_k-a) + (l2-l3)(r_k-1[z=k]-a)
    // Split into a z-independent constant plus a per-group correction.
    let mut constant = -q_const;
    let mut per_group = vec![0.0; k_count];
    for ((pg, l), &rk) in per_group
        .iter_mut()
        .zip(dual.lambda.chunks_exact(4))
        .zip(&rates.rates)
    {
        let du = l[0] - l[1];
        let dl = l[2] - l[3];
        constant += du * (-rk - alpha) + dl * (rk - alpha);
        *pg = du - dl;
    }
    z.iter()
        .map(|&zi| constant + per_group[zi] + proj.point[zi] - target[zi])
        .collect()
}

/// Game parameters for [`learn_split`].
#[derive(Debug, Clone, Copy)]
pub struct SplitParams {
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: f64,
    /// Round cap standing in for the theoretical iteration count, which is
    /// astronomically large at realistic sample sizes; the post-hoc
    /// feasibility check enforces the guarantee empirically.
    pub t_cap: usize,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams {
            alpha: 0.1,
            epsilon: 0.05,
            gamma: 0.1,
            t_cap: 2_000,
        }
    }
}

/// Result of one run of the splitting game.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub splitter: RandomizedSplitter,
    /// E[h̃(x)] per dataset row (zero-weight rows included).
    pub mixture_probs: Vec<f64>,
    /// Raw constraint slacks of the mixture, length 4K.
    pub slacks: Vec<f64>,
    /// Whether the mixture satisfies every posterior-gap constraint within
    /// alpha + epsilon.
    pub feasible: bool,
    pub final_dual: DualState,
}

/// One candidate hypothesis in the master-problem pool, cached with its
/// per-sample predictions and constraint column. Objective values depend
/// on the stage and are computed alongside.
struct PoolEntry {
    hypothesis: LinearThresholdHypothesis,
    preds: Vec<f64>,
    constraints: Vec<f64>,
}

/// Runs the splitting game at one vertex. The game rounds seed a pool of
/// deterministic hypotheses; the returned splitter is the exact optimal
/// mixture over that pool (solved as a small linear program, refined by
/// column generation through the same cost-sensitive oracle), with a
/// post-hoc feasibility verdict on the mixture.
#[allow(clippy::too_many_arguments)]
pub fn learn_split(
    view: &WeightedView,
    ds: &LabeledDataset,
    proj: &HullProjection,
    u: &TargetDistribution,
    rates: &BaseRates,
    params: &SplitParams,
) -> Result<SplitOutcome> {
    if view.total() <= 0.0 {
        return Err(Error::DegenerateVertex);
    }
    let active: Vec<usize> = (0..ds.len()).filter(|&i| view.weights[i] > 1e-12).collect();
    let m = active.len();
    if m == 0 {
        return Err(Error::DegenerateVertex);
    }
    let k_count = ds.group_count;
    let q_const = split_objective_constant(view, &ds.sensitive, proj, u, params.gamma)?;

    let lambda_max = m as f64 * (k_count as f64 - 1.0) / (k_count as f64 * params.epsilon) + 2.0;
    let t_theory = (2.0 * k_count as f64 * m as f64 * (1.0 + params.alpha) * lambda_max
        / params.epsilon)
        .powi(2)
        .ceil();
    let rounds = if t_theory < params.t_cap as f64 {
        t_theory as usize
    } else {
        params.t_cap
    }
    .max(1);

    let points: Vec<Vec<f64>> = active.iter().map(|&i| ds.features[i].clone()).collect();
    let weights: Vec<f64> = active.iter().map(|&i| view.weights[i]).collect();
    let z: Vec<usize> = active.iter().map(|&i| ds.sensitive[i]).collect();
    let solver = PrcSolver::new(&points, &weights)?;

    let mut pool: Vec<PoolEntry> = Vec::new();
    let mut seen: HypothesisSet = HypothesisSet::new();
    let add_to_pool = |pool: &mut Vec<PoolEntry>,
                       seen: &mut HypothesisSet,
                       h: LinearThresholdHypothesis|
     -> bool {
        let preds: Vec<f64> = points.iter().map(|x| h.predict(x) as f64).collect();
        let key: Vec<u8> = preds.iter().map(|&p| p as u8).collect();
        if !seen.insert(key) {
            return false;
        }
        let constraints = dual_gradient(&weights, &z, &preds, rates, params.alpha);
        pool.push(PoolEntry {
            hypothesis: h,
            preds,
            constraints,
        });
        true
    };

    // The two constant splitters are always available: send everything to
    // side 1 or everything to side 0. Both are trivially feasible (the
    // empty side is ignored), so the master problem always has a feasible
    // starting point. Scores carry an intercept in the last slot.
    let dim = points[0].len() + 1;
    let all_one = LinearThresholdHypothesis {
        score_one: {
            let mut s = vec![0.0; dim];
            s[dim - 1] = -1.0;
            s
        },
        score_zero: vec![0.0; dim],
    };
    let all_zero = LinearThresholdHypothesis {
        score_one: {
            let mut s = vec![0.0; dim];
            s[dim - 1] = 1.0;
            s
        },
        score_zero: vec![0.0; dim],
    };
    add_to_pool(&mut pool, &mut seen, all_one);
    add_to_pool(&mut pool, &mut seen, all_zero);

    // Warm-start phase: the online game. The dual trajectory visits
    // informative trade-offs between the objective and the constraints,
    // and each best response lands in the pool.
    let mut dual = DualState::new(k_count, lambda_max);
    // Step sizes scale with the inverse vertex mass so the raw constraint
    // gradients (which grow linearly in the mass) act like O(1) quantities.
    let total_mass: f64 = weights.iter().sum();
    for t in 1..=rounds {
        let costs = label_one_costs(&z, &dual, q_const, proj, u, rates, params.alpha);
        let h = solver.best_response(&costs);
        let preds: Vec<f64> = points.iter().map(|x| h.predict(x) as f64).collect();
        let grad = dual_gradient(&weights, &z, &preds, rates, params.alpha);
        dual.ascend(&grad, 1.0 / (total_mass * (t as f64).sqrt()));
        debug_assert!(dual.lambda.iter().all(|&l| l >= 0.0));
        add_to_pool(&mut pool, &mut seen, h);
    }

    // Master problem: the cheapest mixture over the pool whose aggregate
    // constraint column is nonpositive, refined by column generation.
    //
    // Stage 1 prices splits with the margin-certified constant Q(gamma):
    // a negative optimum certifies the geometric progress condition
    // outright. At a binding disclosure budget that condition can be
    // unattainable for any split (side posteriors may move at most alpha
    // per coordinate, while the margin demands a fixed fraction of the
    // remaining distance), and the optimum degenerates to the empty
    // split at cost zero. Stage 2 then reprices with the margin-free
    // constant Q(0), which ranks splits purely by directional progress
    // toward the target; the caller's empirical distance check decides
    // whether that progress suffices.
    let ctx = MasterContext {
        points: &points,
        weights: &weights,
        z: &z,
        solver: &solver,
        proj,
        u,
        rates,
        alpha: params.alpha,
        k_count,
    };
    let (mut mu, mut cg_dual) = ctx.optimize(&mut pool, &mut seen, &add_to_pool, q_const)?;
    let cert_tol = 1e-9 * (1.0 + total_mass);
    if mu.objective >= -cert_tol {
        let q_free = split_objective_constant(view, &ds.sensitive, proj, u, 0.0)?;
        let (mu2, dual2) = ctx.optimize(&mut pool, &mut seen, &add_to_pool, q_free)?;
        mu = mu2;
        cg_dual = dual2;
    }
    dual = cg_dual;

    // Assemble the mixture from the optimal weights.
    let mut hypotheses = Vec::new();
    let mut mix_weights = Vec::new();
    let mut probs_active = vec![0.0; m];
    let support: f64 = mu.x[..pool.len()].iter().filter(|&&w| w > 1e-12).sum();
    for (entry, &w) in pool.iter().zip(&mu.x) {
        if w <= 1e-12 {
            continue;
        }
        let w = w / support;
        hypotheses.push(entry.hypothesis.clone());
        mix_weights.push(w);
        for (s, p) in probs_active.iter_mut().zip(&entry.preds) {
            *s += w * p;
        }
    }

    let slacks = dual_gradient(&weights, &z, &probs_active, rates, params.alpha);
    let feasible = mixture_is_feasible(&weights, &z, &probs_active, rates, params, k_count);

    let mut mixture_probs = vec![0.0; ds.len()];
    for (&i, &p) in active.iter().zip(&probs_active) {
        mixture_probs[i] = p;
    }
    Ok(SplitOutcome {
        splitter: RandomizedSplitter {
            hypotheses,
            weights: mix_weights,
        },
        mixture_probs,
        slacks,
        feasible,
        final_dual: dual,
    })
}

type HypothesisSet = std::collections::HashSet<Vec<u8>>;

/// Shared inputs of the master-problem stages.
struct MasterContext<'a> {
    points: &'a [Vec<f64>],
    weights: &'a [f64],
    z: &'a [usize],
    solver: &'a PrcSolver,
    proj: &'a HullProjection,
    u: &'a TargetDistribution,
    rates: &'a BaseRates,
    alpha: f64,
    k_count: usize,
}

impl MasterContext<'_> {
    /// Weighted split objective of a prediction vector under constant q.
    fn objective_of(&self, preds: &[f64], q_const: f64) -> f64 {
        let target = self.u.vector();
        self.weights
            .iter()
            .zip(self.z)
            .zip(preds)
            .map(|((w, &zi), p)| w * p * (-q_const + self.proj.point[zi] - target[zi]))
            .sum()
    }

    /// Solves the master problem at constant `q_const`, growing the pool by
    /// column generation: the row duals price the constraints, and the
    /// oracle searches for a hypothesis with negative reduced cost.
    fn optimize<F>(
        &self,
        pool: &mut Vec<PoolEntry>,
        seen: &mut HypothesisSet,
        add_to_pool: &F,
        q_const: f64,
    ) -> Result<(crate::lp::LpSolution, DualState)>
    where
        F: Fn(&mut Vec<PoolEntry>, &mut HypothesisSet, LinearThresholdHypothesis) -> bool,
    {
        const CG_ROUNDS: usize = 50;
        let mut objs: Vec<f64> = pool
            .iter()
            .map(|e| self.objective_of(&e.preds, q_const))
            .collect();
        let mut mu = solve_master(pool, &objs, self.k_count)?;
        let mut out_dual = DualState {
            lambda: vec![0.0; 4 * self.k_count],
            lambda_max: f64::INFINITY,
        };
        for _ in 0..CG_ROUNDS {
            let lambda: Vec<f64> = mu.duals[..4 * self.k_count]
                .iter()
                .map(|&y| (-y).max(0.0))
                .collect();
            let nu = mu.duals[4 * self.k_count];
            // Reduced cost of h: obj(h) + lambda . g(h) - nu. The weighted
            // label-one cost under the priced costs differs from
            // obj(h) + lambda . g(h) by an h-independent constant: the
            // complement-side dual terms, which equal lambda dotted with
            // the constraint column of the all-zero splitter (pool[1]).
            let priced_dual = DualState {
                lambda,
                lambda_max: f64::INFINITY,
            };
            let costs = label_one_costs(
                self.z,
                &priced_dual,
                q_const,
                self.proj,
                self.u,
                self.rates,
                self.alpha,
            );
            let h = self.solver.best_response(&costs);
            let preds: Vec<f64> = self.points.iter().map(|x| h.predict(x) as f64).collect();
            let priced: f64 = self
                .weights
                .iter()
                .zip(&preds)
                .zip(&costs)
                .map(|((w, p), c)| w * p * c)
                .sum();
            let complement_const: f64 = priced_dual
                .lambda
                .iter()
                .zip(&pool[1].constraints)
                .map(|(l, g)| l * g)
                .sum();
            let tol = 1e-9 * (1.0 + nu.abs());
            out_dual = priced_dual;
            if priced + complement_const >= nu - tol || !add_to_pool(pool, seen, h) {
                break;
            }
            objs.push(self.objective_of(&pool.last().expect("just pushed").preds, q_const));
            mu = solve_master(pool, &objs, self.k_count)?;
        }
        Ok((mu, out_dual))
    }
}

/// Solves the master problem over the current pool:
/// min sum_j mu_j obj_j  s.t.  sum_j mu_j g_j <= b, sum_j mu_j = 1, mu >= 0.
/// Columns are the pool entries followed by one slack per constraint row;
/// the all-ones row comes last.
///
/// The right-hand side b is zero wherever the vertex itself sits within
/// the posterior-gap budget; where the vertex already exceeds it (interior
/// vertices may drift up to the epsilon tolerance), the row is relaxed to
/// the vertex's own violation, i.e. the value a constant split attains, so
/// no split is asked to improve on doing nothing. This makes the all-1
/// hypothesis (pool index 0) plus the slacks a feasible starting basis:
/// its split-side rows equal b or are nonpositive, and its complement-side
/// rows are zero.
fn solve_master(pool: &[PoolEntry], objs: &[f64], k_count: usize) -> Result<crate::lp::LpSolution> {
    use nalgebra::{DMatrix, DVector};
    let rows = 4 * k_count + 1;
    let n = pool.len();
    let cols = n + 4 * k_count;
    let mut a = DMatrix::zeros(rows, cols);
    let mut c = vec![0.0; cols];
    for (j, entry) in pool.iter().enumerate() {
        for (r, &g) in entry.constraints.iter().enumerate() {
            a[(r, j)] = g;
        }
        a[(rows - 1, j)] = 1.0;
        c[j] = objs[j];
    }
    for r in 0..4 * k_count {
        a[(r, n + r)] = 1.0;
    }
    let mut b = DVector::zeros(rows);
    for r in 0..4 * k_count {
        // pool[0] is the all-1 splitter, pool[1] the all-0 splitter.
        b[r] = pool[0].constraints[r].max(pool[1].constraints[r]).max(0.0);
    }
    b[rows - 1] = 1.0;
    let mut basis: Vec<usize> = (n..cols).collect();
    basis.push(0);
    crate::lp::simplex_from_basis(&a, &b, &c, basis)
}

/// Normalized feasibility check: on each side of the split with
/// non-negligible mass, every group posterior stays within
/// alpha + epsilon of the base rate.
fn mixture_is_feasible(
    weights: &[f64],
    z: &[usize],
    probs: &[f64],
    rates: &BaseRates,
    params: &SplitParams,
    k_count: usize,
) -> bool {
    for side in [true, false] {
        let side_w = |p: f64| if side { p } else { 1.0 - p };
        let mass: f64 = weights.iter().zip(probs).map(|(w, &p)| w * side_w(p)).sum();
        if mass <= 1e-9 {
            continue;
        }
        for k in 0..k_count {
            let group_mass: f64 = weights
                .iter()
                .zip(z)
                .zip(probs)
                .filter(|((_, &zi), _)| zi == k)
                .map(|((w, _), &p)| w * side_w(p))
                .sum();
            if (group_mass / mass - rates.rates[k]).abs() > params.alpha + params.epsilon {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::base_rates;
    use crate::synth;

    fn proj_at(point: Vec<f64>, distance: f64) -> HullProjection {
        HullProjection {
            point,
            coefficients: vec![1.0],
            distance,
        }
    }

    #[test]
    fn lagrangian_zero_dual_is_bare_objective() {
        let view = WeightedView::root(3);
        let z = vec![0, 1, 0];
        let probs = vec![1.0, 0.5, 0.0];
        let dual = DualState::new(2, 10.0);
        let proj = proj_at(vec![0.7, 0.3], 0.3);
        let u = TargetDistribution::uniform(2);
        let rates = BaseRates {
            rates: vec![2.0 / 3.0, 1.0 / 3.0],
        };
        let q_const = 0.17;
        let val = lagrangian_value(&view, &z, &probs, &dual, q_const, &proj, &u, &rates, 0.1);
        let expected: f64 = [(1.0, 0usize), (0.5, 1), (0.0, 0)]
            .iter()
            .map(|&(p, zi): &(f64, usize)| p * (-q_const + proj.point[zi] - 0.5))
            .sum();
        assert!((val - expected).abs() < 1e-12);
    }

    #[test]
    fn lagrangian_all_zero_splitter_leaves_complement_terms() {
        let view = WeightedView::root(2);
        let z = vec![0, 1];
        let probs = vec![0.0, 0.0];
        let mut dual = DualState::new(2, 10.0);
        dual.lambda = vec![1.0, 2.0, 3.0, 4.0, 0.5, 0.25, 0.125, 0.0625];
        let proj = proj_at(vec![0.6, 0.4], 0.2);
        let u = TargetDistribution::uniform(2);
        let rates = BaseRates {
            rates: vec![0.5, 0.5],
        };
        let alpha = 0.1;
        let val = lagrangian_value(&view, &z, &probs, &dual, 0.3, &proj, &u, &rates, alpha);
        // Only the (1 - h) dual entries (indices 1 and 3 per block) survive.
        let mut expected = 0.0;
        for &zi in &z {
            for k in 0..2 {
                let ind = f64::from(zi == k);
                expected += dual.lambda[4 * k + 1] * (ind - 0.5 - alpha);
                expected += dual.lambda[4 * k + 3] * (0.5 - ind - alpha);
            }
        }
        assert!((val - expected).abs() < 1e-12);
    }

    #[test]
    fn dual_gradient_frozen_single_sample() {
        let rates = BaseRates {
            rates: vec![0.5, 0.5],
        };
        let g = dual_gradient(&[1.0], &[0], &[1.0], &rates, 0.1);
        // k=0 family: (0.4, 0, -0.6, 0).
        assert!((g[0] - 0.4).abs() < 1e-12);
        assert_eq!(g[1], 0.0);
        assert!((g[2] + 0.6).abs() < 1e-12);
        assert_eq!(g[3], 0.0);
    }

    #[test]
    fn constraints_vacuous_at_alpha_one() {
        let rates = BaseRates {
            rates: vec![0.3, 0.7],
        };
        let weights = vec![1.0, 0.5, 0.25];
        let z = vec![0, 1, 1];
        let probs = vec![1.0, 0.0, 0.5];
        let g = dual_gradient(&weights, &z, &probs, &rates, 1.0);
        assert!(g.iter().all(|&s| s <= 1e-12));
    }

    #[test]
    fn split_at_base_rates_zeroes_split_side_slacks() {
        // Split half of each group to side 1: side distributions equal the
        // base rates, so the alpha=0 upper slacks vanish.
        let rates = BaseRates {
            rates: vec![0.5, 0.5],
        };
        let weights = vec![1.0; 4];
        let z = vec![0, 0, 1, 1];
        let probs = vec![0.5, 0.5, 0.5, 0.5];
        let g = dual_gradient(&weights, &z, &probs, &rates, 0.0);
        for k in 0..2 {
            assert!(g[4 * k].abs() < 1e-12);
            assert!(g[4 * k + 1].abs() < 1e-12);
        }
    }

    #[test]
    fn cost_vector_consistent_with_lagrangian() {
        // For deterministic h: sum_j w_j h_j c1_j plus the lambda-only
        // constant equals L(lambda, h).
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 20;
        let z: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let preds: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let mut dual = DualState::new(3, 100.0);
        for l in &mut dual.lambda {
            *l = rng.gen_range(0.0..2.0);
        }
        let rates = BaseRates {
            rates: vec![0.2, 0.3, 0.5],
        };
        let proj = proj_at(vec![0.4, 0.35, 0.25], 0.2);
        let u = TargetDistribution::uniform(3);
        let (alpha, q_const) = (0.15, 0.4);
        let view = WeightedView {
            weights: weights.clone(),
            vertex_id: "0".into(),
        };

        let costs = label_one_costs(&z, &dual, q_const, &proj, &u, &rates, alpha);
        let from_costs: f64 = weights
            .iter()
            .zip(&preds)
            .zip(&costs)
            .map(|((w, p), c)| w * p * c)
            .sum();
        let mut constant = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            for k in 0..3 {
                let ind = f64::from(z[i] == k);
                constant += w * dual.lambda[4 * k + 1] * (ind - rates.rates[k] - alpha);
                constant += w * dual.lambda[4 * k + 3] * (rates.rates[k] - ind - alpha);
            }
        }
        let direct =
            lagrangian_value(&view, &z, &preds, &dual, q_const, &proj, &u, &rates, alpha);
        assert!((from_costs + constant - direct).abs() < 1e-9);
    }

    #[test]
    fn single_round_returns_prc_response_at_zero_dual() {
        let ds = synth::two_group_separable(200, 0.75, 7);
        let view = WeightedView::root(ds.len());
        let rates = base_rates(&ds).unwrap();
        let u = TargetDistribution::uniform(2);
        let proj = proj_at(rates.rates.clone(), 0.25);
        let params = SplitParams {
            alpha: 1.0,
            t_cap: 1,
            ..Default::default()
        };
        let out = learn_split(&view, &ds, &proj, &u, &rates, &params).unwrap();
        assert_eq!(out.splitter.hypotheses.len(), 1);
        // One round means the mixture is that single deterministic response.
        for (i, x) in ds.features.iter().enumerate() {
            assert_eq!(
                out.mixture_probs[i],
                out.splitter.hypotheses[0].predict(x) as f64
            );
        }
    }

    #[test]
    fn informative_feature_yields_negative_objective() {
        // z is determined by the first feature; with vacuous constraints the
        // learner should find a split making directional progress.
        let ds = synth::two_group_separable(400, 0.75, 11);
        let view = WeightedView::root(ds.len());
        let rates = base_rates(&ds).unwrap();
        let u = TargetDistribution::uniform(2);
        let proj = proj_at(rates.rates.clone(), 0.25);
        let params = SplitParams {
            alpha: 1.0,
            gamma: 1e-6,
            t_cap: 50,
            ..Default::default()
        };
        let out = learn_split(&view, &ds, &proj, &u, &rates, &params).unwrap();
        assert!(out.feasible);
        let q_const =
            split_objective_constant(&view, &ds.sensitive, &proj, &u, params.gamma).unwrap();
        let objective: f64 = ds
            .sensitive
            .iter()
            .enumerate()
            .map(|(i, &zi)| {
                view.weights[i]
                    * out.mixture_probs[i]
                    * (-q_const + proj.point[zi] - u.vector()[zi])
            })
            .sum();
        assert!(objective < 0.0, "objective {objective}");
        // Brute force over single-feature threshold splits confirms a
        // negative-objective split exists at all.
        let mut best = f64::INFINITY;
        for t in [-0.5, 0.0, 0.5] {
            let obj: f64 = ds
                .features
                .iter()
                .zip(&ds.sensitive)
                .map(|(x, &zi)| {
                    f64::from(x[0] > t) * (-q_const + proj.point[zi] - u.vector()[zi])
                })
                .sum();
            best = best.min(obj);
        }
        assert!(best < 0.0);
    }

    #[test]
    fn independent_features_feasible_at_alpha_zero() {
        let ds = synth::group_independent(300, 2, 13);
        let view = WeightedView::root(ds.len());
        let rates = base_rates(&ds).unwrap();
        let u = TargetDistribution::uniform(2);
        let proj = proj_at(rates.rates.clone(), 0.2);
        let params = SplitParams {
            alpha: 0.0,
            epsilon: 0.25,
            t_cap: 60,
            ..Default::default()
        };
        let out = learn_split(&view, &ds, &proj, &u, &rates, &params).unwrap();
        assert!(out.feasible, "slacks {:?}", out.slacks);
        let norm = out
            .final_dual
            .lambda
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        assert!(out.final_dual.lambda.iter().all(|&l| l >= 0.0));
        assert!(norm <= out.final_dual.lambda_max * (1.0 + 1e-9));
    }

    #[test]
    fn feasibility_monotone_in_alpha() {
        // Fixtures feasible at a tight budget stay feasible at looser ones.
        let alphas = [0.05, 0.2, 0.6];
        for seed in [1u64, 2, 3] {
            let ds = synth::correlated_groups(300, 2, 0.7, seed);
            let view = WeightedView::root(ds.len());
            let rates = base_rates(&ds).unwrap();
            let u = TargetDistribution::uniform(2);
            let proj = proj_at(rates.rates.clone(), 0.2);
            let mut last = false;
            for (i, &alpha) in alphas.iter().enumerate() {
                let params = SplitParams {
                    alpha,
                    t_cap: 40,
                    ..Default::default()
                };
                let out = learn_split(&view, &ds, &proj, &u, &rates, &params).unwrap();
                if i > 0 && last {
                    assert!(out.feasible, "seed {seed}: lost feasibility at {alpha}");
                }
                last = out.feasible;
            }
        }
    }
}
