//! Disclosivity/imbalance measurement and the growth-rate and sample-size
//! bound calculators.

use serde::{Deserialize, Serialize};

use crate::dataset::TargetDistribution;
use crate::geometry::l2_dist;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleSource {
    Train,
    Test,
    Collected,
}

/// Measured privacy/balance profile of a proxy on one sample set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProxyAudit {
    /// Max over groups i and proxy values j of |P[z=i|ẑ=j] − P[z=i]|.
    pub disclosivity: f64,
    /// L2 distance between the empirical group marginal and the target.
    pub imbalance: f64,
    /// Row j is the group distribution within proxy cell j (empty cells
    /// are all-zero rows).
    pub per_leaf_posteriors: Vec<Vec<f64>>,
    pub priors: Vec<f64>,
    /// Proxy cells that received no samples; they contribute nothing to
    /// disclosivity.
    pub skipped_cells: usize,
    pub sample_source: SampleSource,
    pub sample_count: usize,
}

/// Audits proxy assignments against true group labels. `range` is the
/// number of proxy values; empty cells are skipped with a count.
pub fn audit(
    labels_z: &[usize],
    labels_zhat: &[usize],
    range: usize,
    u: &TargetDistribution,
    source: SampleSource,
) -> Result<ProxyAudit> {
    if labels_z.is_empty() || labels_z.len() != labels_zhat.len() {
        return Err(Error::Contract("audit inputs empty or mismatched".into()));
    }
    let k = u.len();
    let n = labels_z.len() as f64;
    let mut priors = vec![0.0; k];
    let mut cell_counts = vec![0.0; range];
    let mut joint = vec![vec![0.0; k]; range];
    for (&z, &zh) in labels_z.iter().zip(labels_zhat) {
        if z >= k {
            return Err(Error::Contract(format!("group index {z} out of range")));
        }
        if zh >= range {
            return Err(Error::Contract(format!("proxy value {zh} out of range")));
        }
        priors[z] += 1.0;
        cell_counts[zh] += 1.0;
        joint[zh][z] += 1.0;
    }
    for p in &mut priors {
        *p /= n;
    }
    let mut disclosivity: f64 = 0.0;
    let mut skipped = 0usize;
    let mut posteriors = vec![vec![0.0; k]; range];
    for j in 0..range {
        if cell_counts[j] == 0.0 {
            skipped += 1;
            continue;
        }
        for i in 0..k {
            let post = joint[j][i] / cell_counts[j];
            posteriors[j][i] = post;
            disclosivity = disclosivity.max((post - priors[i]).abs());
        }
    }
    let imbalance = imbalance_of(&priors, u);
    Ok(ProxyAudit {
        disclosivity,
        imbalance,
        per_leaf_posteriors: posteriors,
        priors,
        skipped_cells: skipped,
        sample_source: source,
        sample_count: labels_z.len(),
    })
}

/// Imbalance of an empirical marginal against the target. In intersecting
/// mode the marginal is renormalized within each group class before the
/// distance is taken.
pub fn imbalance_of(marginal: &[f64], u: &TargetDistribution) -> f64 {
    match u {
        TargetDistribution::Disjoint { target } => l2_dist(marginal, target),
        TargetDistribution::Intersecting {
            group_classes,
            target,
        } => {
            let mut normalized = marginal.to_vec();
            let mut start = 0;
            for (_, size) in group_classes {
                let total: f64 = normalized[start..start + size].iter().sum();
                if total > 0.0 {
                    for v in &mut normalized[start..start + size] {
                        *v /= total;
                    }
                }
                start += size;
            }
            l2_dist(&normalized, target)
        }
    }
}

/// Disclosivity of an exactly-computed conditional matrix against fixed
/// priors: max over rows and groups of |posterior − prior|.
pub fn disclosivity_of_matrix(rows: &[Vec<f64>], priors: &[f64]) -> f64 {
    rows.iter()
        .flat_map(|row| row.iter().zip(priors).map(|(a, p)| (a - p).abs()))
        .fold(0.0, f64::max)
}

/// Audit for intersecting groups: each sample carries one group index per
/// class (global indices into 0..K).
pub fn audit_intersecting(
    memberships: &[Vec<usize>],
    labels_zhat: &[usize],
    range: usize,
    u: &TargetDistribution,
    source: SampleSource,
) -> Result<ProxyAudit> {
    let classes = match u {
        TargetDistribution::Intersecting { group_classes, .. } => group_classes,
        TargetDistribution::Disjoint { .. } => {
            return Err(Error::Contract("target is not intersecting".into()))
        }
    };
    if memberships.is_empty() || memberships.len() != labels_zhat.len() {
        return Err(Error::Contract("audit inputs empty or mismatched".into()));
    }
    let k = u.len();
    let n = memberships.len() as f64;
    let mut priors = vec![0.0; k];
    let mut cell_counts = vec![0.0; range];
    let mut joint = vec![vec![0.0; k]; range];
    for (groups, &zh) in memberships.iter().zip(labels_zhat) {
        if groups.len() != classes.len() {
            return Err(Error::Contract("membership misses a group class".into()));
        }
        if zh >= range {
            return Err(Error::Contract(format!("proxy value {zh} out of range")));
        }
        cell_counts[zh] += 1.0;
        for &g in groups {
            if g >= k {
                return Err(Error::Contract(format!("group index {g} out of range")));
            }
            priors[g] += 1.0;
            joint[zh][g] += 1.0;
        }
    }
    for p in &mut priors {
        *p /= n;
    }
    let mut disclosivity: f64 = 0.0;
    let mut skipped = 0usize;
    let mut posteriors = vec![vec![0.0; k]; range];
    for j in 0..range {
        if cell_counts[j] == 0.0 {
            skipped += 1;
            continue;
        }
        for i in 0..k {
            let post = joint[j][i] / cell_counts[j];
            posteriors[j][i] = post;
            disclosivity = disclosivity.max((post - priors[i]).abs());
        }
    }
    let imbalance = imbalance_of(&priors, u);
    Ok(ProxyAudit {
        disclosivity,
        imbalance,
        per_leaf_posteriors: posteriors,
        priors,
        skipped_cells: skipped,
        sample_source: source,
        sample_count: memberships.len(),
    })
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn check_rate_domain(beta: f64, gamma: f64) -> Result<()> {
    if !(0.0 < beta && beta <= SQRT2) {
        return Err(Error::Domain(format!("beta {beta} outside (0, sqrt(2)]")));
    }
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma {gamma} outside (0, 1)")));
    }
    Ok(())
}

/// (ln β − ln √2) / ln(1 − γ): the real-valued round count before taking
/// the ceiling.
fn round_ratio(beta: f64, gamma: f64) -> Result<f64> {
    check_rate_domain(beta, gamma)?;
    Ok(((beta.ln() - SQRT2.ln()) / (1.0 - gamma).ln()).max(0.0))
}

/// Rounds of per-round factor (1 − γ) needed to push the hull distance
/// from its √2 cap below β.
pub fn round_bound(beta: f64, gamma: f64) -> Result<u64> {
    Ok(round_ratio(beta, gamma)?.ceil() as u64)
}

pub(crate) fn min_leaf_size_real(
    epsilon: f64,
    delta: f64,
    d: usize,
    k: usize,
    beta: f64,
    gamma: f64,
) -> Result<f64> {
    if epsilon <= 0.0 || delta <= 0.0 || delta >= 1.0 || d == 0 || k == 0 {
        return Err(Error::Domain("invalid sample-size inputs".into()));
    }
    let ratio = round_ratio(beta, gamma)?;
    let arg = 8.0 * d as f64 * k as f64 * ratio / delta;
    if arg <= 1.0 {
        return Err(Error::Domain("nonpositive log argument".into()));
    }
    Ok(arg.ln() / (2.0 * epsilon * epsilon))
}

/// Per-leaf sample count sufficient for the out-of-sample guarantee; `d`
/// is the VC dimension of the splitter class (p + 1 for linear
/// thresholds on p features).
pub fn min_leaf_size(
    epsilon: f64,
    delta: f64,
    d: usize,
    k: usize,
    beta: f64,
    gamma: f64,
) -> Result<u64> {
    Ok(min_leaf_size_real(epsilon, delta, d, k, beta, gamma)?.ceil() as u64)
}

/// Out-of-sample degradation: (α + 2ε, β + kε·√(real round count)).
pub fn out_of_sample_bound(
    alpha: f64,
    beta: f64,
    epsilon: f64,
    k: usize,
    gamma: f64,
) -> Result<(f64, f64)> {
    if alpha < 0.0 || epsilon < 0.0 {
        return Err(Error::Domain("negative alpha or epsilon".into()));
    }
    let ratio = round_ratio(beta, gamma)?;
    Ok((
        alpha + 2.0 * epsilon,
        beta + k as f64 * epsilon * ratio.sqrt(),
    ))
}

/// All bound calculators evaluated on one input set, inputs echoed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub round_bound: u64,
    pub min_leaf_size: u64,
    pub out_of_sample_alpha: f64,
    pub out_of_sample_beta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub d: usize,
    pub k: usize,
    pub gamma: f64,
    /// The sample-size log constant 8 is the conservative stated value;
    /// the underlying derivation supports 6.
    pub constant_note: String,
}

pub fn bound_report(
    alpha: f64,
    beta: f64,
    epsilon: f64,
    delta: f64,
    d: usize,
    k: usize,
    gamma: f64,
) -> Result<BoundReport> {
    let (a_oos, b_oos) = out_of_sample_bound(alpha, beta, epsilon, k, gamma)?;
    Ok(BoundReport {
        round_bound: round_bound(beta, gamma)?,
        min_leaf_size: min_leaf_size(epsilon, delta, d, k, beta, gamma)?,
        out_of_sample_alpha: a_oos,
        out_of_sample_beta: b_oos,
        alpha,
        beta,
        epsilon,
        delta,
        d,
        k,
        gamma,
        constant_note: "sample-size log constant 8 is conservative; 6 suffices".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(k: usize) -> TargetDistribution {
        TargetDistribution::uniform(k)
    }

    #[test]
    fn constant_proxy_has_zero_disclosivity() {
        let z = vec![0, 1, 0, 1, 1, 0];
        let zh = vec![0; 6];
        let a = audit(&z, &zh, 1, &uniform(2), SampleSource::Train).unwrap();
        assert!(a.disclosivity.abs() < 1e-12);
    }

    #[test]
    fn perfect_proxy_balanced_priors() {
        let z = vec![0, 1, 0, 1];
        let a = audit(&z, &z, 2, &uniform(2), SampleSource::Train).unwrap();
        assert!((a.disclosivity - 0.5).abs() < 1e-12);
        assert!(a.imbalance.abs() < 1e-12);
    }

    #[test]
    fn pure_cell_on_rare_group() {
        // One cell is 100% a group with prior ~0.03: gap ~0.97.
        let mut z = vec![0usize; 97];
        z.extend(vec![1usize; 3]);
        let zh: Vec<usize> = z.clone();
        let a = audit(&z, &zh, 2, &uniform(2), SampleSource::Test).unwrap();
        assert!((a.disclosivity - 0.97).abs() < 1e-12);
    }

    #[test]
    fn disclosivity_invariant_under_cell_relabel() {
        let z = vec![0, 1, 0, 1, 1, 0, 0, 0];
        let zh = vec![0, 1, 1, 0, 1, 1, 0, 0];
        let a = audit(&z, &zh, 2, &uniform(2), SampleSource::Train).unwrap();
        let flipped: Vec<usize> = zh.iter().map(|&v| 1 - v).collect();
        let b = audit(&z, &flipped, 2, &uniform(2), SampleSource::Train).unwrap();
        assert!((a.disclosivity - b.disclosivity).abs() < 1e-12);
    }

    #[test]
    fn imbalance_zero_iff_marginal_matches_target() {
        let z = vec![0, 1, 0, 1];
        let zh = vec![0; 4];
        let a = audit(&z, &zh, 1, &uniform(2), SampleSource::Collected).unwrap();
        assert_eq!(a.imbalance, 0.0);
        let z = vec![0, 0, 0, 1];
        let b = audit(&z, &zh, 1, &uniform(2), SampleSource::Collected).unwrap();
        assert!(b.imbalance > 0.0);
        // K=2 with marginal (0.75, 0.25): distance sqrt(2*0.25^2).
        assert!((b.imbalance - (2.0f64 * 0.0625).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_cells_skipped_not_infinite() {
        let z = vec![0, 1, 0, 1];
        let zh = vec![0, 0, 0, 0];
        let a = audit(&z, &zh, 3, &uniform(2), SampleSource::Train).unwrap();
        assert_eq!(a.skipped_cells, 2);
        assert!(a.disclosivity.is_finite());
    }

    #[test]
    fn audit_bounds_hold() {
        let z = vec![0, 1, 2, 0, 1, 2, 0, 0];
        let zh = vec![0, 1, 0, 1, 0, 1, 0, 1];
        let a = audit(&z, &zh, 2, &uniform(3), SampleSource::Train).unwrap();
        assert!((0.0..=1.0).contains(&a.disclosivity));
        assert!((0.0..=SQRT2).contains(&a.imbalance));
    }

    #[test]
    fn intersecting_audit_normalizes_per_class() {
        let u = TargetDistribution::intersecting(vec![("s".into(), 2), ("r".into(), 2)]).unwrap();
        // Global groups: 0,1 = class s; 2,3 = class r. Balanced in both.
        let memberships = vec![
            vec![0, 2],
            vec![1, 3],
            vec![0, 3],
            vec![1, 2],
        ];
        let zh = vec![0, 0, 0, 0];
        let a = audit_intersecting(&memberships, &zh, 1, &u, SampleSource::Train).unwrap();
        assert!(a.imbalance.abs() < 1e-12);
        assert!(a.disclosivity.abs() < 1e-12);
        // Skew class r entirely to group 2.
        let memberships = vec![vec![0, 2], vec![1, 2], vec![0, 2], vec![1, 2]];
        let b = audit_intersecting(&memberships, &zh, 1, &u, SampleSource::Train).unwrap();
        // Class s balanced, class r at (1,0) vs (0.5,0.5): sqrt(0.5).
        assert!((b.imbalance - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn round_bound_frozen_values() {
        assert_eq!(round_bound(SQRT2, 0.5).unwrap(), 0);
        assert_eq!(round_bound(0.1, 0.1).unwrap(), 26);
        assert_eq!(round_bound(0.5, 0.5).unwrap(), 2);
    }

    #[test]
    fn round_bound_domain_errors() {
        assert!(round_bound(0.0, 0.5).is_err());
        assert!(round_bound(1.5, 0.5).is_err());
        assert!(round_bound(0.5, 0.0).is_err());
        assert!(round_bound(0.5, 1.0).is_err());
    }

    #[test]
    fn round_bound_monotone() {
        // Nonincreasing in gamma; nondecreasing as beta decreases.
        let mut prev = u64::MAX;
        for g in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let b = round_bound(0.1, g).unwrap();
            assert!(b <= prev);
            prev = b;
        }
        let mut prev = 0;
        for beta in [1.0, 0.5, 0.2, 0.1, 0.01] {
            let b = round_bound(beta, 0.1).unwrap();
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn min_leaf_size_frozen_value() {
        // Direct high-precision evaluation: 2340.196127157988.
        assert_eq!(min_leaf_size(0.05, 0.05, 10, 3, 0.1, 0.1).unwrap(), 2341);
        let real = min_leaf_size_real(0.05, 0.05, 10, 3, 0.1, 0.1).unwrap();
        assert!((real - 2_340.196_127_157_988).abs() < 1e-9);
    }

    #[test]
    fn min_leaf_size_log_additivity() {
        let eps = 0.05;
        let base = min_leaf_size_real(eps, 0.05, 10, 3, 0.1, 0.1).unwrap();
        let doubled = min_leaf_size_real(eps, 0.05, 20, 3, 0.1, 0.1).unwrap();
        assert!((doubled - base - 2.0f64.ln() / (2.0 * eps * eps)).abs() < 1e-9);
        // Doubling epsilon quarters the leading factor.
        let wide = min_leaf_size_real(2.0 * eps, 0.05, 10, 3, 0.1, 0.1).unwrap();
        assert!((wide - base / 4.0).abs() < 1e-9);
    }

    #[test]
    fn out_of_sample_frozen_values() {
        let (a, b) = out_of_sample_bound(0.1, 0.1, 0.0, 3, 0.1).unwrap();
        assert_eq!((a, b), (0.1, 0.1));
        let (a, _) = out_of_sample_bound(0.1, 0.1, 0.05, 3, 0.1).unwrap();
        assert!((a - 0.2).abs() < 1e-12);
        let (_, b) = out_of_sample_bound(0.1, 0.1, 0.05, 3, 0.1).unwrap();
        assert!((b - 0.852_153_190_175_326_2).abs() < 1e-9);
    }

    #[test]
    fn bound_report_round_trips() {
        let r = bound_report(0.1, 0.1, 0.05, 0.05, 10, 3, 0.1).unwrap();
        assert_eq!(r.round_bound, 26);
        assert_eq!(r.min_leaf_size, 2341);
        let json = serde_json::to_string(&r).unwrap();
        let back: BoundReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.round_bound, r.round_bound);
        assert_eq!(back.d, 10);
    }
}
