//! Seeded synthetic datasets for tests, benches, and desk-scale runs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::LabeledDataset;

fn assemble(features: Vec<Vec<f64>>, sensitive: Vec<usize>, k: usize, rng: &mut ChaCha8Rng) -> LabeledDataset {
    let n = features.len();
    let p = features[0].len();
    LabeledDataset {
        labels: (0..n).map(|_| u8::from(rng.gen_bool(0.5))).collect(),
        feature_names: (0..p).map(|j| format!("f{j}")).collect(),
        group_names: (0..k).map(|g| format!("g{g}")).collect(),
        features,
        sensitive,
        group_count: k,
    }
}

/// Two groups with unequal base rates where the first feature's sign
/// determines the group exactly; three noise features follow.
pub fn two_group_separable(n: usize, majority_rate: f64, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut sensitive = Vec::with_capacity(n);
    for _ in 0..n {
        let z = usize::from(!rng.gen_bool(majority_rate));
        let x0 = if z == 1 { 1.0 } else { -1.0 };
        features.push(vec![
            x0,
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ]);
        sensitive.push(z);
    }
    ensure_all_groups(&mut sensitive, 2);
    assemble(features, sensitive, 2, &mut rng)
}

/// Features carry no information about the group.
pub fn group_independent(n: usize, k: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut sensitive = Vec::with_capacity(n);
    for _ in 0..n {
        sensitive.push(rng.gen_range(0..k));
        features.push((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    ensure_all_groups(&mut sensitive, k);
    assemble(features, sensitive, k, &mut rng)
}

/// Controllable feature-group correlation: the first feature mixes a
/// group-specific mean with noise; `correlation` in [0,1] sets the blend.
pub fn correlated_groups(n: usize, k: usize, correlation: f64, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut sensitive = Vec::with_capacity(n);
    for _ in 0..n {
        let z = rng.gen_range(0..k);
        let mu = z as f64 / (k.max(2) - 1) as f64 * 2.0 - 1.0;
        let x0 = correlation * mu + (1.0 - correlation) * rng.gen_range(-1.0..1.0);
        features.push(vec![
            x0,
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ]);
        sensitive.push(z);
    }
    ensure_all_groups(&mut sensitive, k);
    assemble(features, sensitive, k, &mut rng)
}

/// Five groups with heavily skewed base rates and moderately informative
/// mixed features; a stand-in for census-style tabular data.
pub fn skewed_census_like(n: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rates = [0.75, 0.12, 0.06, 0.04, 0.03];
    let k = rates.len();
    let mut features = Vec::with_capacity(n);
    let mut sensitive = Vec::with_capacity(n);
    for _ in 0..n {
        let draw: f64 = rng.gen();
        let mut acc = 0.0;
        let mut z = k - 1;
        for (g, &r) in rates.iter().enumerate() {
            acc += r;
            if draw < acc {
                z = g;
                break;
            }
        }
        let mu = z as f64 / (k - 1) as f64;
        let row = vec![
            // Continuous features correlated with the group at varying noise.
            0.7 * mu + 0.3 * rng.gen_range(0.0..1.0),
            0.5 * mu + 0.5 * rng.gen_range(0.0..1.0),
            0.3 * mu + 0.7 * rng.gen_range(0.0..1.0),
            // Binary features with group-shifted frequency.
            f64::from(rng.gen_bool((0.2 + 0.6 * mu).clamp(0.01, 0.99))),
            f64::from(rng.gen_bool((0.7 - 0.4 * mu).clamp(0.01, 0.99))),
            // Pure noise.
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.0..1.0),
            f64::from(rng.gen_bool(0.5)),
            rng.gen_range(0.0..1.0),
        ];
        features.push(row);
        sensitive.push(z);
    }
    ensure_all_groups(&mut sensitive, k);
    assemble(features, sensitive, k, &mut rng)
}

/// The census-like fixture with its group signal attenuated: each row
/// keeps its own feature vector with probability `signal`, otherwise it
/// takes the features of a uniformly random row. Base rates are
/// unchanged while every posterior deviation shrinks by roughly the
/// `signal` factor — the regime of tabular data whose sensitive
/// attribute is only weakly predictable.
pub fn blended_census_like(n: usize, signal: f64, seed: u64) -> LabeledDataset {
    let mut ds = skewed_census_like(n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let original = ds.features.clone();
    for row in ds.features.iter_mut() {
        if !rng.gen_bool(signal.clamp(0.0, 1.0)) {
            *row = original[rng.gen_range(0..original.len())].clone();
        }
    }
    ds
}

/// Forces every group to appear at least once so tiny fixtures stay valid.
fn ensure_all_groups(sensitive: &mut [usize], k: usize) {
    for g in 0..k {
        if !sensitive.contains(&g) {
            sensitive[g % sensitive.len()] = g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_valid_and_deterministic() {
        for ds in [
            two_group_separable(50, 0.75, 1),
            group_independent(50, 3, 1),
            correlated_groups(50, 3, 0.5, 1),
            skewed_census_like(200, 1),
        ] {
            ds.validate().unwrap();
        }
        let a = skewed_census_like(100, 9);
        let b = skewed_census_like(100, 9);
        assert_eq!(a.features, b.features);
        assert_eq!(a.sensitive, b.sensitive);
    }
}
