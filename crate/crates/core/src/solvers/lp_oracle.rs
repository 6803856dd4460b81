//! Exact ℓ1 minimization for tiny instances by vertex enumeration.
//!
//! The program is rewritten as an LP in standard form: `x = p − q` with
//! `p, q ≥ 0` (or `x ≥ 0` directly under the nonnegativity constraint),
//! `[A, −A]·(p, q) = y`, minimizing the sum of the variables. An optimum of
//! a bounded feasible LP sits at a basic feasible solution, so trying every
//! set of `m` columns finds it.

use nalgebra::{DMatrix, DVector};

use super::{Constraint, RecoveryProblem};
use crate::error::{Error, Result};

const MAX_DIM: usize = 12;

/// Advances `idx` to the next `k`-subset of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Returns `(min ‖x‖₁, x)` for problems with `n ≤ 12` and no ℓ2-ball.
pub fn lp_oracle_small(problem: &RecoveryProblem) -> Result<(f64, Vec<f64>)> {
    let (m, n) = problem.a().shape();
    if n > MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "lp oracle supports n <= {MAX_DIM}, got {n}"
        )));
    }
    if problem
        .constraints()
        .iter()
        .any(|c| matches!(c, Constraint::L2Ball { .. }))
    {
        return Err(Error::InvalidArgument("lp oracle does not handle the l2 ball".into()));
    }
    let nonneg = problem.nonneg();
    let cols = if nonneg { n } else { 2 * n };
    let column = |j: usize| -> DVector<f64> {
        if j < n {
            problem.a().column(j).clone_owned()
        } else {
            -problem.a().column(j - n).clone_owned()
        }
    };
    let y = problem.y();
    let scale = 1.0 + y.amax();

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        // A basis holding both p_j and q_j is singular; skip it early.
        let paired = !nonneg && idx.iter().any(|&j| j >= n && idx.contains(&(j - n)));
        if !paired {
            let mut basis = DMatrix::zeros(m, m);
            for (c, &j) in idx.iter().enumerate() {
                basis.set_column(c, &column(j));
            }
            let lu = basis.clone().full_piv_lu();
            let u_diag = lu.u().diagonal();
            let (lo, hi) = u_diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| {
                (lo.min(d.abs()), hi.max(d.abs()))
            });
            if lo > 1e-10 * hi {
                if let Some(sol) = lu.solve(y) {
                    let feasible =
                        sol.iter().all(|&v| v >= -1e-9 * scale) && (&basis * &sol - y).amax() <= 1e-9 * scale;
                    if feasible {
                        let obj: f64 = sol.iter().map(|v| v.max(0.0)).sum();
                        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                            let mut x = vec![0.0; n];
                            for (&j, &v) in idx.iter().zip(sol.iter()) {
                                let v = v.max(0.0);
                                if j < n {
                                    x[j] += v;
                                } else {
                                    x[j - n] -= v;
                                }
                            }
                            best = Some((obj, x));
                        }
                    }
                }
            }
        }
        if !next_combination(&mut idx, cols) {
            break;
        }
    }
    best.ok_or(Error::Infeasible)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_enumerate_all_subsets() {
        let mut idx = vec![0, 1];
        let mut count = 1;
        while next_combination(&mut idx, 5) {
            count += 1;
        }
        assert_eq!(count, 10);
    }

    #[test]
    fn identity_gives_l1_norm_of_y() {
        let a = DMatrix::identity(3, 3);
        let prob = RecoveryProblem::new(a, vec![1.0, -2.0, 0.5], vec![]).unwrap();
        let (obj, x) = lp_oracle_small(&prob).unwrap();
        assert!((obj - 3.5).abs() < 1e-12);
        assert_eq!(x, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn zero_measurements_give_zero() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.3, 2.0]);
        let prob = RecoveryProblem::new(a, vec![0.0, 0.0], vec![]).unwrap();
        let (obj, x) = lp_oracle_small(&prob).unwrap();
        assert_eq!(obj, 0.0);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonneg_infeasible_detected() {
        // x1 + x2 = −1 has no nonnegative solution.
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let prob = RecoveryProblem::new(a, vec![-1.0], vec![Constraint::Nonneg]).unwrap();
        assert!(matches!(lp_oracle_small(&prob), Err(Error::Infeasible)));
    }

    #[test]
    fn small_hand_instance() {
        // min |x1| + |x2| s.t. x1 + 2 x2 = 2  →  x = (0, 1), objective 1.
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let prob = RecoveryProblem::new(a, vec![2.0], vec![]).unwrap();
        let (obj, x) = lp_oracle_small(&prob).unwrap();
        assert!((obj - 1.0).abs() < 1e-12);
        assert!((x[1] - 1.0).abs() < 1e-12 && x[0] == 0.0);
    }

    #[test]
    fn rejects_ball_and_large_problems() {
        let a = DMatrix::identity(2, 2);
        let p = RecoveryProblem::new(a, vec![1.0, 1.0], vec![Constraint::L2Ball { radius: 2.0 }]).unwrap();
        assert!(lp_oracle_small(&p).is_err());
        let big = RecoveryProblem::new(DMatrix::identity(13, 13), vec![1.0; 13], vec![]).unwrap();
        assert!(lp_oracle_small(&big).is_err());
    }
}
