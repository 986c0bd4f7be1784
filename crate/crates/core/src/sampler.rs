//! Acceptance-probability plans and rejection sampling.
//!
//! A plan fixes, per proxy group, the probability of keeping an arriving
//! sample. Deriving the plan from mixing weights q over the conditional
//! matrix makes the distribution of the kept samples' sensitive attribute
//! equal q·A, so solving for q with q·A = U balances the collected set.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TargetDistribution;
use crate::geometry::{constrained_least_squares, ConditionalMatrix, Feasible};
use crate::{Error, Result};

/// Anything that maps a feature vector to one of finitely many groups,
/// possibly using randomness.
pub trait Proxy {
    fn range_size(&self) -> usize;

    fn assign(&self, x: &[f64], rng: &mut ChaCha8Rng) -> usize;

    /// Stable names for the groups; plans key acceptance rates by name.
    fn group_names(&self) -> Vec<String> {
        (0..self.range_size()).map(|i| i.to_string()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    /// Mixing weights on the simplex: exact balance when U lies in the hull.
    Strict,
    /// Mixing weights on the nonnegative orthant: drops the sum-to-one
    /// constraint and can land strictly closer to the target.
    Relaxed,
}

/// Per-leaf acceptance probabilities plus the weights that induced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub leaf_ids: Vec<String>,
    /// Mixing weights over leaves (stochastic in strict mode).
    pub q: Vec<f64>,
    /// Acceptance probability per leaf, max exactly 1.
    pub rho: Vec<f64>,
    /// The max of q_j / r_j used to scale rho into [0,1].
    pub normalizer: f64,
    pub mode: PlanMode,
    /// Serialization format version.
    pub version: u32,
}

impl SamplingPlan {
    /// Acceptance probability for a named leaf; leaves absent from the
    /// plan (dropped at derivation for zero mass) are never accepted.
    pub fn rho_for(&self, leaf_id: &str) -> f64 {
        self.leaf_ids
            .iter()
            .position(|id| id == leaf_id)
            .map_or(0.0, |j| self.rho[j])
    }

    /// Expected fraction of arriving samples that get kept.
    pub fn keep_rate(&self, leaf_mass: &[f64]) -> f64 {
        leaf_mass.iter().zip(&self.rho).map(|(r, p)| r * p).sum()
    }
}

const MASS_FLOOR: f64 = 1e-9;

/// Derives acceptance probabilities from the conditional matrix: solve
/// for mixing weights q minimizing ‖qA − U‖, then set
/// rho_j = (q_j / r_j) / max_i(q_i / r_i).
pub fn derive_plan(
    a: &ConditionalMatrix,
    u: &TargetDistribution,
    mode: PlanMode,
) -> Result<SamplingPlan> {
    a.validate()?;
    if u.len() != a.group_count() {
        return Err(Error::Domain("target length does not match matrix".into()));
    }
    let feasible = match mode {
        PlanMode::Strict => Feasible::Simplex,
        PlanMode::Relaxed => Feasible::Orthant,
    };
    let q = match constrained_least_squares(&a.rows, u.vector(), feasible) {
        Ok(p) => p.coefficients,
        // A stalled solve still carries its best iterate; plan quality is
        // checked downstream by the audit, not here.
        Err(Error::SolverStalled { best, .. }) => best.coefficients,
        Err(e) => return Err(e),
    };
    plan_from_weights(a, q, mode)
}

/// Algorithm core shared with tests: turns fixed mixing weights into
/// acceptance probabilities.
pub fn plan_from_weights(
    a: &ConditionalMatrix,
    q: Vec<f64>,
    mode: PlanMode,
) -> Result<SamplingPlan> {
    let mut ratios = Vec::with_capacity(q.len());
    for (j, (&qj, &rj)) in q.iter().zip(&a.leaf_mass).enumerate() {
        if rj <= MASS_FLOOR {
            if qj > MASS_FLOOR {
                return Err(Error::ZeroMassLeaf(a.leaf_ids[j].clone()));
            }
            ratios.push(0.0);
        } else {
            ratios.push(qj / rj);
        }
    }
    let normalizer = ratios.iter().cloned().fold(0.0, f64::max);
    if normalizer <= 0.0 {
        return Err(Error::DegeneratePlan);
    }
    let rho: Vec<f64> = ratios.iter().map(|r| (r / normalizer).clamp(0.0, 1.0)).collect();
    Ok(SamplingPlan {
        leaf_ids: a.leaf_ids.clone(),
        q,
        rho,
        normalizer,
        mode,
        version: 1,
    })
}

/// Distribution of the sensitive attribute among kept samples:
/// sum_j r_j rho_j A_j / sum_j r_j rho_j. Equals q·A (renormalized) by
/// construction of the plan.
pub fn induced_distribution(plan: &SamplingPlan, a: &ConditionalMatrix) -> Result<Vec<f64>> {
    if plan.leaf_ids != a.leaf_ids {
        return Err(Error::Contract("plan and matrix leaves disagree".into()));
    }
    let k = a.group_count();
    let mut num = vec![0.0; k];
    let mut den = 0.0;
    for ((row, &rj), &pj) in a.rows.iter().zip(&a.leaf_mass).zip(&plan.rho) {
        den += rj * pj;
        for (nk, ak) in num.iter_mut().zip(row) {
            *nk += rj * pj * ak;
        }
    }
    if den <= 0.0 {
        return Err(Error::DegeneratePlan);
    }
    Ok(num.iter().map(|n| n / den).collect())
}

/// Filters a sample stream: route each row through the proxy, keep it
/// with the leaf's acceptance probability. Returns kept row indices;
/// deterministic given the seed.
pub fn rejection_sample<P: Proxy>(
    proxy: &P,
    plan: &SamplingPlan,
    features: &[Vec<f64>],
    seed: u64,
) -> Result<Vec<usize>> {
    let names = proxy.group_names();
    if names.len() != proxy.range_size() {
        return Err(Error::Contract("proxy names do not cover its range".into()));
    }
    let rho: Vec<f64> = names.iter().map(|n| plan.rho_for(n)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = Vec::new();
    for (i, x) in features.iter().enumerate() {
        let j = proxy.assign(x, &mut rng);
        if rng.gen::<f64>() < rho[j] {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// Disclosivity knob: with probability eta the proxy's answer is replaced
/// by a uniformly random group.
pub struct Interpolated<P> {
    pub inner: P,
    pub eta: f64,
}

impl<P: Proxy> Interpolated<P> {
    pub fn new(inner: P, eta: f64) -> Result<Interpolated<P>> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Domain(format!("eta {eta} outside [0,1]")));
        }
        Ok(Interpolated { inner, eta })
    }
}

impl<P: Proxy> Proxy for Interpolated<P> {
    fn range_size(&self) -> usize {
        self.inner.range_size()
    }

    fn assign(&self, x: &[f64], rng: &mut ChaCha8Rng) -> usize {
        // Draw the inner assignment unconditionally so the randomness
        // stream stays aligned across eta values.
        let j = self.inner.assign(x, rng);
        if self.eta > 0.0 && rng.gen::<f64>() < self.eta {
            rng.gen_range(0..self.range_size())
        } else {
            j
        }
    }

    fn group_names(&self) -> Vec<String> {
        self.inner.group_names()
    }
}
