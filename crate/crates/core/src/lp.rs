//! A small dense linear-program solver (revised simplex, Bland's rule)
//! for the per-vertex master problem: optimal mixture weights over a
//! finite hypothesis pool subject to the posterior-gap constraints.
//!
//! Problems here have a few dozen rows and columns, so each iteration
//! solves the basis system directly; Bland's anti-cycling rule makes
//! termination unconditional.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Solution of `min c·x  s.t.  A x = b, x >= 0`.
#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    pub x: Vec<f64>,
    /// One dual value per equality row (y = c_B B^{-T}).
    pub duals: Vec<f64>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub objective: f64,
}

const TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

/// Revised simplex from a caller-supplied feasible basis. `basis` must
/// index `rows` linearly independent columns whose basic solution is
/// nonnegative; both are the caller's contract.
pub(crate) fn simplex_from_basis(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &[f64],
    mut basis: Vec<usize>,
) -> Result<LpSolution> {
    let rows = a.nrows();
    let cols = a.ncols();
    if basis.len() != rows || c.len() != cols || b.len() != rows {
        return Err(Error::Contract("simplex dimensions disagree".into()));
    }
    for _pivot in 0..MAX_PIVOTS {
        let b_mat = a.select_columns(basis.iter());
        let lu = b_mat.clone().lu();
        let xb = lu
            .solve(b)
            .ok_or_else(|| Error::Domain("singular simplex basis".into()))?;
        let cb = DVector::from_iterator(rows, basis.iter().map(|&j| c[j]));
        let y = b_mat
            .transpose()
            .lu()
            .solve(&cb)
            .ok_or_else(|| Error::Domain("singular simplex basis".into()))?;

        // Bland: entering column is the lowest index with negative
        // reduced cost.
        let mut entering = None;
        for (j, &cj) in c.iter().enumerate() {
            if basis.contains(&j) {
                continue;
            }
            let reduced = cj - y.dot(&a.column(j));
            if reduced < -TOL {
                entering = Some(j);
                break;
            }
        }
        let entering = match entering {
            Some(j) => j,
            None => {
                let mut x = vec![0.0; cols];
                for (&j, &v) in basis.iter().zip(xb.iter()) {
                    x[j] = v.max(0.0);
                }
                let objective = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
                return Ok(LpSolution {
                    x,
                    duals: y.iter().copied().collect(),
                    objective,
                });
            }
        };

        let d = lu
            .solve(&a.column(entering).into_owned())
            .ok_or_else(|| Error::Domain("singular simplex basis".into()))?;
        // Bland again: among the tight ratio rows pick the one whose
        // basic variable has the lowest index.
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..rows {
            if d[i] > TOL {
                let ratio = (xb[i] / d[i]).max(0.0);
                let better = match leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - TOL || (ratio <= lr + TOL && basis[i] < basis[li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        match leave {
            Some((i, _)) => basis[i] = entering,
            None => return Err(Error::Domain("unbounded linear program".into())),
        }
    }
    Err(Error::Domain("simplex pivot limit exceeded".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(
        a_rows: Vec<Vec<f64>>,
        b: Vec<f64>,
        c: Vec<f64>,
        basis: Vec<usize>,
    ) -> LpSolution {
        let rows = a_rows.len();
        let cols = a_rows[0].len();
        let a = DMatrix::from_fn(rows, cols, |i, j| a_rows[i][j]);
        let b = DVector::from_vec(b);
        simplex_from_basis(&a, &b, &c, basis).unwrap()
    }

    #[test]
    fn textbook_two_variable_program() {
        // max x + y s.t. x + 2y <= 4, 3x + y <= 6 => min -x - y.
        // Columns: x, y, s1, s2. Start basis: slacks.
        let sol = solve(
            vec![vec![1.0, 2.0, 1.0, 0.0], vec![3.0, 1.0, 0.0, 1.0]],
            vec![4.0, 6.0],
            vec![-1.0, -1.0, 0.0, 0.0],
            vec![2, 3],
        );
        // Optimum at x = 8/5, y = 6/5, value -14/5.
        assert!((sol.x[0] - 1.6).abs() < 1e-9);
        assert!((sol.x[1] - 1.2).abs() < 1e-9);
        assert!((sol.objective + 2.8).abs() < 1e-9);
    }

    #[test]
    fn duals_certify_optimum() {
        // Strong duality: y·b equals the primal optimum.
        let sol = solve(
            vec![vec![1.0, 2.0, 1.0, 0.0], vec![3.0, 1.0, 0.0, 1.0]],
            vec![4.0, 6.0],
            vec![-1.0, -1.0, 0.0, 0.0],
            vec![2, 3],
        );
        let dual_value = sol.duals[0] * 4.0 + sol.duals[1] * 6.0;
        assert!((dual_value - sol.objective).abs() < 1e-9);
        // For <= rows written as equalities with slacks, duals are <= 0
        // in a minimization.
        assert!(sol.duals.iter().all(|&y| y <= 1e-9));
    }

    #[test]
    fn degenerate_start_terminates() {
        // min -x s.t. x <= y, x <= 1: the zero row makes the first pivots
        // degenerate; Bland must still reach x = y = 1.
        let sol = solve(
            vec![vec![1.0, -1.0, 1.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]],
            vec![0.0, 1.0],
            vec![-1.0, 0.0, 0.0, 0.0],
            vec![2, 3],
        );
        assert!((sol.objective + 1.0).abs() < 1e-9);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn already_optimal_basis_returns_immediately() {
        let sol = solve(
            vec![vec![1.0, 1.0, 1.0]],
            vec![1.0],
            vec![2.0, 3.0, 1.0],
            vec![2],
        );
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert!((sol.x[2] - 1.0).abs() < 1e-12);
    }
}
