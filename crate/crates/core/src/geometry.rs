//! Convex-hull projection and the per-split progress machinery.
//!
//! The solver is a primal active-set method for the least-squares
//! problem over the simplex (or the nonnegative orthant in relaxed
//! mode). Dimensions are tiny — the tree height cap keeps the number of
//! rows small — so each pivot solves a dense KKT system directly and
//! the method terminates exactly, which is easy to verify against brute
//! force.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{TargetDistribution, WeightedView};
use crate::{Error, Result};

/// Conditional distribution matrix: row j is the distribution of the
/// sensitive attribute among samples the proxy maps to leaf j.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionalMatrix {
    /// ℓ×K, each row stochastic.
    pub rows: Vec<Vec<f64>>,
    /// P[leaf j]; stochastic, length ℓ.
    pub leaf_mass: Vec<f64>,
    /// Binary-string leaf ids mapping rows to tree leaves.
    pub leaf_ids: Vec<String>,
}

impl ConditionalMatrix {
    pub fn leaf_count(&self) -> usize {
        self.rows.len()
    }

    pub fn group_count(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Domain("conditional matrix has no rows".into()));
        }
        if self.leaf_mass.len() != self.rows.len() || self.leaf_ids.len() != self.rows.len() {
            return Err(Error::Domain("row/mass/id lengths disagree".into()));
        }
        for row in &self.rows {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&v| v < -1e-12) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::Domain("non-stochastic conditional row".into()));
            }
        }
        let s: f64 = self.leaf_mass.iter().sum();
        if self.leaf_mass.iter().any(|&v| v < -1e-12) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::Domain("non-stochastic leaf mass".into()));
        }
        Ok(())
    }
}

/// Projection of the target onto the convex hull of the matrix rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HullProjection {
    /// The closest point q·A in the hull.
    pub point: Vec<f64>,
    /// Stochastic mixing weights over rows.
    pub coefficients: Vec<f64>,
    /// ‖U − point‖₂.
    pub distance: f64,
}

pub(crate) fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean projection onto the probability simplex.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let candidate = (cumsum - 1.0) / (i + 1) as f64;
        if ui - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn matvec_left(rows: &[Vec<f64>], q: &[f64]) -> Vec<f64> {
    let k = rows[0].len();
    let mut out = vec![0.0; k];
    for (qj, row) in q.iter().zip(rows) {
        if *qj == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += qj * a;
        }
    }
    out
}

pub(crate) enum Feasible {
    Simplex,
    Orthant,
}

/// Solves the equality-and-bound KKT system restricted to the free
/// variables: minimize qᵀGq − 2bᵀq over q_F (other coordinates fixed at
/// zero), with Σ q_F = 1 when `simplex`. Uses an SVD pseudo-inverse so
/// rank-deficient Gram blocks (collinear rows) pick the least-norm
/// solution instead of failing.
fn solve_free_subproblem(
    gram: &[Vec<f64>],
    b: &[f64],
    free: &[usize],
    simplex: bool,
) -> Vec<f64> {
    let f = free.len();
    let n = if simplex { f + 1 } else { f };
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (r, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            m[(r, c)] = 2.0 * gram[i][j];
        }
        rhs[r] = 2.0 * b[i];
        if simplex {
            m[(r, f)] = 1.0;
            m[(f, r)] = 1.0;
        }
    }
    if simplex {
        rhs[f] = 1.0;
    }
    let svd = m.svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(n));
    (0..f).map(|r| sol[r]).collect()
}

/// Minimizes ‖qA − U‖₂ over the feasible set with a primal active-set
/// method: start from the uniform point, repeatedly solve the problem
/// restricted to the currently-free coordinates, and pivot on bound and
/// multiplier violations. Convex QPs of this size terminate in a
/// handful of pivots, so the cap below is only an anti-cycling guard.
pub(crate) fn constrained_least_squares(
    rows: &[Vec<f64>],
    target: &[f64],
    feasible: Feasible,
) -> Result<HullProjection> {
    let l = rows.len();
    // Precompute G = A·Aᵀ and b = A·U; grad = 2(Gq − b).
    let gram: Vec<Vec<f64>> = (0..l)
        .map(|i| {
            (0..l)
                .map(|j| rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    let b: Vec<f64> = rows
        .iter()
        .map(|row| row.iter().zip(target).map(|(a, u)| a * u).sum())
        .collect();
    let gradient = |q: &[f64]| -> Vec<f64> {
        (0..l)
            .map(|i| 2.0 * (gram[i].iter().zip(q).map(|(g, qj)| g * qj).sum::<f64>() - b[i]))
            .collect()
    };
    let simplex = matches!(feasible, Feasible::Simplex);
    let scale = 1.0 + b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    const BOUND_EPS: f64 = 1e-12;
    let dual_eps = 1e-9 * scale;

    let mut q = vec![1.0 / l as f64; l];
    let mut free = vec![true; l];
    let max_pivots = 40 * (l + 2) * (l + 2);
    for _pivot in 0..max_pivots {
        let fidx: Vec<usize> = (0..l).filter(|&i| free[i]).collect();
        let qf = solve_free_subproblem(&gram, &b, &fidx, simplex);
        if qf.iter().all(|&x| x >= -BOUND_EPS) {
            // Subproblem optimum is feasible: adopt it and check the
            // multipliers on the bound-active coordinates.
            for (&i, &x) in fidx.iter().zip(&qf) {
                q[i] = x.max(0.0);
            }
            for (i, qi) in q.iter_mut().enumerate() {
                if !free[i] {
                    *qi = 0.0;
                }
            }
            let g = gradient(&q);
            // At the restricted optimum the gradient is ν on the free
            // set (ν = 0 for the orthant); averaging is robust to the
            // least-norm tie-breaking under rank deficiency.
            let nu = if simplex && !fidx.is_empty() {
                fidx.iter().map(|&i| g[i]).sum::<f64>() / fidx.len() as f64
            } else {
                0.0
            };
            let mut worst: Option<usize> = None;
            let mut worst_violation = dual_eps;
            for i in 0..l {
                if !free[i] {
                    let violation = nu - g[i];
                    if violation > worst_violation {
                        worst_violation = violation;
                        worst = Some(i);
                    }
                }
            }
            match worst {
                None => {
                    let point = matvec_left(rows, &q);
                    let distance = l2_dist(&point, target);
                    return Ok(HullProjection {
                        point,
                        coefficients: q,
                        distance,
                    });
                }
                Some(i) => free[i] = true,
            }
        } else {
            // Step toward the subproblem optimum until the first free
            // coordinate hits its bound, then fix it at zero.
            let mut alpha = 1.0;
            let mut blocker = None;
            for (r, &i) in fidx.iter().enumerate() {
                if qf[r] < -BOUND_EPS && q[i] > qf[r] {
                    let a = q[i] / (q[i] - qf[r]);
                    if a < alpha {
                        alpha = a;
                        blocker = Some(i);
                    }
                }
            }
            for (r, &i) in fidx.iter().enumerate() {
                q[i] = (q[i] + alpha * (qf[r] - q[i])).max(0.0);
            }
            if let Some(i) = blocker {
                free[i] = false;
                q[i] = 0.0;
            }
        }
    }
    let point = matvec_left(rows, &q);
    let distance = l2_dist(&point, target);
    Err(Error::SolverStalled {
        iterations: max_pivots,
        movement: distance,
        best: HullProjection {
            point,
            coefficients: q,
            distance,
        },
    })
}

/// Projects the target distribution onto C(A). `distance <= tol` is the
/// membership test used by the tree-growing loop guard.
pub fn project_to_hull(
    a: &ConditionalMatrix,
    u: &TargetDistribution,
    tol: f64,
) -> Result<HullProjection> {
    if tol <= 0.0 {
        return Err(Error::Domain("tol must be positive".into()));
    }
    a.validate()?;
    if u.len() != a.group_count() {
        return Err(Error::Domain("target length does not match matrix".into()));
    }
    constrained_least_squares(&a.rows, u.vector(), Feasible::Simplex)
}

/// The progress threshold f(γ) from the vertex-splitting condition, with
/// `dist_v_uprime` = ‖R(V) − U'‖.
pub fn f_gamma(gamma: f64, dist_v_uprime: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) || dist_v_uprime < 0.0 {
        return Err(Error::Domain(format!(
            "gamma {gamma} or distance {dist_v_uprime} out of range"
        )));
    }
    let d2 = dist_v_uprime * dist_v_uprime;
    let inner = (gamma * gamma - 2.0 * gamma) * d2 + 2.0;
    if inner < 0.0 {
        return Err(Error::Domain("negative inner radicand in f(gamma)".into()));
    }
    let outer = 2.0 - d2 + 2.0 * dist_v_uprime * (1.0 - gamma) * inner.sqrt();
    if outer < 0.0 {
        return Err(Error::Domain("negative outer radicand in f(gamma)".into()));
    }
    Ok((2.0 * gamma - gamma * gamma).sqrt() * outer.sqrt())
}

/// Empirical progress certificate: the split shrank the hull-to-target
/// distance by at least a factor of 1 − γ.
pub fn check_progress(dist_before: f64, dist_after: f64, gamma: f64) -> bool {
    dist_after <= (1.0 - gamma) * dist_before + 1e-12
}

/// The split-objective constant Q: the threshold a candidate split's
/// weighted directional sum must beat to certify progress.
///
/// Expanding ⟨R(V1) − R(V), U − U'⟩ ≥ f(γ)·‖U − U'‖ over the weighted
/// samples gives Σ w·h·(−Q + (U'−U)_z) ≤ 0 with Q = mean − f(γ)‖U'−U‖,
/// where mean is the weighted average of (U'−U)_z at the vertex. (With
/// the opposite sign on the f term the constant all-ones split would
/// satisfy the inequality while making zero progress.)
pub fn split_objective_constant(
    view: &WeightedView,
    z: &[usize],
    proj: &HullProjection,
    u: &TargetDistribution,
    gamma: f64,
) -> Result<f64> {
    let total = view.total();
    if total <= 0.0 {
        return Err(Error::DegenerateVertex);
    }
    let target = u.vector();
    // R(V): the weighted conditional distribution of z at this vertex.
    let mut row = vec![0.0; target.len()];
    for (&zi, &wi) in z.iter().zip(&view.weights) {
        row[zi] += wi;
    }
    for r in &mut row {
        *r /= total;
    }
    let dist_v_uprime = l2_dist(&row, &proj.point);
    let f = f_gamma(gamma, dist_v_uprime)?;
    let dist_u = l2_dist(&proj.point, target);
    let mean: f64 = z
        .iter()
        .zip(&view.weights)
        .map(|(&zi, &wi)| wi * (proj.point[zi] - target[zi]))
        .sum::<f64>()
        / total;
    Ok(mean - dist_u * f)
}
