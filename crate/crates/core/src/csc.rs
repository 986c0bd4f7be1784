//! Weighted cost-sensitive classification via the paired regression
//! classifier (PRC).
//!
//! The PRC fits one weighted linear regression per label against that
//! label's cost vector and predicts the argmin of the two fitted scores.
//! It is a heuristic oracle: exact cost-optimality is not guaranteed,
//! only the properties exercised by the tests below.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One cost-sensitive classification instance. Label-0 costs are zero in
/// this artifact; `cost1` may be negative.
#[derive(Debug, Clone)]
pub struct CostInstance {
    pub points: Vec<Vec<f64>>,
    /// Per-sample weights in [0,1].
    pub weights: Vec<f64>,
    /// Cost of labeling each point 0; always zero here.
    pub cost0: Vec<f64>,
    /// Cost of labeling each point 1.
    pub cost1: Vec<f64>,
}

impl CostInstance {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>, cost1: Vec<f64>) -> CostInstance {
        let n = points.len();
        CostInstance {
            points,
            weights,
            cost0: vec![0.0; n],
            cost1,
        }
    }
}

/// The PRC classifier: two linear score vectors (intercept last); predicts
/// 1 iff the label-1 regression scores strictly below the label-0
/// regression, ties predicting 0.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LinearThresholdHypothesis {
    pub score_one: Vec<f64>,
    pub score_zero: Vec<f64>,
}

impl LinearThresholdHypothesis {
    fn score(coef: &[f64], x: &[f64]) -> f64 {
        let (w, b) = coef.split_at(coef.len() - 1);
        w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b[0]
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(Self::score(&self.score_one, x) < Self::score(&self.score_zero, x))
    }
}

const RIDGE: f64 = 1e-8;

/// Pre-factorized weighted least squares over a fixed design and weight
/// vector; repeated fits against fresh cost targets only pay a
/// back-substitution. Weights are normalized to mean 1 internally so
/// predictions are invariant to uniform positive rescaling.
pub struct PrcSolver {
    x_aug: DMatrix<f64>,
    weights: DVector<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl PrcSolver {
    pub fn new(points: &[Vec<f64>], weights: &[f64]) -> Result<PrcSolver> {
        let m = points.len();
        if m == 0 {
            return Err(Error::Domain("empty cost instance".into()));
        }
        let p = points[0].len();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateVertex);
        }
        let scale = m as f64 / total;
        let w = DVector::from_iterator(m, weights.iter().map(|&wi| wi * scale));
        let mut x = DMatrix::zeros(m, p + 1);
        for (i, row) in points.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                x[(i, j)] = v;
            }
            x[(i, p)] = 1.0;
        }
        // Gram = X' W X + ridge I; ridge handles one-hot collinearity.
        let mut xw = x.clone();
        for i in 0..m {
            let wi = w[i];
            for j in 0..=p {
                xw[(i, j)] *= wi;
            }
        }
        let mut gram = x.transpose() * &xw;
        for j in 0..=p {
            gram[(j, j)] += RIDGE;
        }
        let chol = Cholesky::new(gram)
            .ok_or_else(|| Error::Domain("normal equations not positive definite".into()))?;
        Ok(PrcSolver {
            x_aug: x,
            weights: w,
            chol,
        })
    }

    /// Weighted ridge fit of `costs` on the stored design.
    pub fn fit(&self, costs: &[f64]) -> Vec<f64> {
        let m = self.x_aug.nrows();
        let wc = DVector::from_iterator(m, costs.iter().zip(self.weights.iter()).map(|(c, w)| c * w));
        let rhs = self.x_aug.transpose() * wc;
        self.chol.solve(&rhs).iter().copied().collect()
    }

    /// PRC best response: regress `cost1` and the zero label-0 costs,
    /// return the induced argmin classifier.
    pub fn best_response(&self, cost1: &[f64]) -> LinearThresholdHypothesis {
        let score_one = self.fit(cost1);
        // cost0 is identically zero, so its ridge fit is the zero vector.
        let score_zero = vec![0.0; score_one.len()];
        LinearThresholdHypothesis {
            score_one,
            score_zero,
        }
    }
}

/// PRC best response for a standalone instance.
pub fn prc_best_response(inst: &CostInstance) -> Result<LinearThresholdHypothesis> {
    debug_assert!(inst.cost0.iter().all(|&c| c == 0.0));
    Ok(PrcSolver::new(&inst.points, &inst.weights)?.best_response(&inst.cost1))
}

/// Total weighted cost of a hypothesis on an instance.
pub fn oracle_cost(h: &LinearThresholdHypothesis, inst: &CostInstance) -> f64 {
    inst.points
        .iter()
        .zip(&inst.weights)
        .zip(inst.cost1.iter().zip(&inst.cost0))
        .map(|((x, &w), (&c1, &c0))| {
            let pred = h.predict(x) as f64;
            w * (pred * c1 + (1.0 - pred) * c0)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_negative_cost_point_labeled_one() {
        let inst = CostInstance::new(vec![vec![0.3]], vec![1.0], vec![-1.0]);
        let h = prc_best_response(&inst).unwrap();
        assert_eq!(h.predict(&[0.3]), 1);
    }

    #[test]
    fn all_positive_costs_labeled_zero() {
        let points: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0]).collect();
        let inst = CostInstance::new(points.clone(), vec![1.0; 10], vec![2.0; 10]);
        let h = prc_best_response(&inst).unwrap();
        let cost = oracle_cost(&h, &inst);
        assert!(cost <= 0.0 + 1e-12); // all-0 baseline has cost 0
        for x in &points {
            assert_eq!(h.predict(x), 0);
        }
    }

    #[test]
    fn one_dim_threshold_costs() {
        // 20 points in 1-d with cost sign = sign(x - 0.5): PRC must agree
        // with the best threshold on at least 19 of them.
        let points: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64 + 0.5) / 20.0]).collect();
        let cost1: Vec<f64> = points.iter().map(|x| (x[0] - 0.5).signum()).collect();
        let inst = CostInstance::new(points.clone(), vec![1.0; 20], cost1.clone());
        let h = prc_best_response(&inst).unwrap();
        // Brute-force oracle over all 1-d thresholds.
        let mut best_labels = vec![0u8; 20];
        let mut best_cost = f64::INFINITY;
        for t in 0..=20 {
            let labels: Vec<u8> = (0..20).map(|i| u8::from(i < t)).collect();
            let cost: f64 = labels
                .iter()
                .zip(&cost1)
                .map(|(&l, &c)| l as f64 * c)
                .sum();
            if cost < best_cost {
                best_cost = cost;
                best_labels = labels;
            }
        }
        let agree = points
            .iter()
            .zip(&best_labels)
            .filter(|(x, &l)| h.predict(x) == l)
            .count();
        assert!(agree >= 19, "agreement {agree}/20");
    }

    #[test]
    fn oracle_cost_hand_fixture() {
        let inst = CostInstance::new(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![0.5, 1.0, 0.25],
            vec![-2.0, 3.0, -4.0],
        );
        // A hypothesis labeling exactly x<=0 and x>=2 as 1.
        let h = LinearThresholdHypothesis {
            score_one: vec![0.0, -1.0],
            score_zero: vec![0.0, 0.0],
        };
        assert_eq!(h.predict(&[0.0]), 1);
        assert_eq!(h.predict(&[1.0]), 1);
        assert_eq!(h.predict(&[2.0]), 1);
        // All labeled 1: cost = 0.5*-2 + 1*3 + 0.25*-4 = 1.0
        assert!((oracle_cost(&h, &inst) - 1.0).abs() < 1e-12);
        // All-0 hypothesis has cost 0.
        let h0 = LinearThresholdHypothesis {
            score_one: vec![0.0, 1.0],
            score_zero: vec![0.0, 0.0],
        };
        assert_eq!(oracle_cost(&h0, &inst), 0.0);
    }

    #[test]
    fn beats_constant_baselines_on_realizable_fixtures() {
        // 100 random fixtures with exactly linear cost-1 vectors: PRC must
        // never cost more than the better of all-0 / all-1.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..100 {
            let m = rng.gen_range(5..=50);
            let p = rng.gen_range(1..=5);
            let points: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let plane: Vec<f64> = (0..=p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cost1: Vec<f64> = points
                .iter()
                .map(|x| {
                    x.iter().zip(&plane).map(|(xi, wi)| xi * wi).sum::<f64>() + plane[p]
                })
                .collect();
            let weights: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
            let inst = CostInstance::new(points, weights.clone(), cost1.clone());
            let h = prc_best_response(&inst).unwrap();
            let prc_cost = oracle_cost(&h, &inst);
            let all1: f64 = weights.iter().zip(&cost1).map(|(w, c)| w * c).sum();
            let baseline = all1.min(0.0);
            assert!(
                prc_cost <= baseline + 1e-6,
                "trial {trial}: PRC {prc_cost} vs baseline {baseline}"
            );
        }
    }

    #[test]
    fn invariant_to_uniform_weight_rescale() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let cost1: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let weights: Vec<f64> = (0..30).map(|_| rng.gen_range(0.1..1.0)).collect();
        let scaled: Vec<f64> = weights.iter().map(|w| w * 7.3).collect();
        let h1 = prc_best_response(&CostInstance::new(points.clone(), weights, cost1.clone()))
            .unwrap();
        let h2 =
            prc_best_response(&CostInstance::new(points.clone(), scaled, cost1)).unwrap();
        for x in &points {
            assert_eq!(h1.predict(x), h2.predict(x));
        }
    }

    #[test]
    fn deterministic() {
        let inst = CostInstance::new(
            vec![vec![0.1, 0.2], vec![0.7, 0.3]],
            vec![1.0, 0.5],
            vec![-1.0, 2.0],
        );
        let h1 = prc_best_response(&inst).unwrap();
        let h2 = prc_best_response(&inst).unwrap();
        assert_eq!(h1, h2);
    }

    #[test]
    fn collinear_features_handled_by_ridge() {
        // Duplicate one-hot style columns are rank deficient; ridge keeps
        // the solve well posed.
        let points = vec![vec![1.0, 1.0], vec![0.0, 0.0], vec![1.0, 1.0]];
        let inst = CostInstance::new(points, vec![1.0; 3], vec![-1.0, 1.0, -1.0]);
        let h = prc_best_response(&inst).unwrap();
        assert_eq!(h.predict(&[1.0, 1.0]), 1);
        assert_eq!(h.predict(&[0.0, 0.0]), 0);
    }
}
