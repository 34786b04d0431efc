//! Sparse LU solve for systems that need not be definite.

use std::panic::AssertUnwindSafe;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use super::krylov::{check_dims, true_residual};
use super::{CsrMatrix, Solution};
use crate::error::{Error, Result};

const REFINEMENT_STEPS: usize = 3;

/// Solve `A x = b` by a fill-reducing sparse LU factorisation with partial pivoting.
///
/// The matrix is equilibrated symmetrically with `|diag(A)|^{-1/2}` and the
/// solution is improved by a few steps of iterative refinement.
pub fn solve_direct(a: &CsrMatrix, b: &[f64]) -> Result<Solution> {
    check_dims(a, b)?;
    let n = a.nrows();
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let d = a.get(i, i).abs();
            if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 }
        })
        .collect();
    let mut triplets = Vec::with_capacity(a.nnz());
    for i in 0..n {
        let (cols, vals) = a.row(i);
        triplets.extend(cols.iter().zip(vals).map(|(&j, &v)| Triplet::new(i, j, scale[i] * v * scale[j])));
    }
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::Internal(format!("sparse matrix assembly failed: {e:?}")))?;
    // The factorisation aborts by panicking on exactly singular pivots.
    let lu = std::panic::catch_unwind(AssertUnwindSafe(|| m.sp_lu()))
        .map_err(|_| Error::NumericalFailure("sparse LU hit a zero pivot (singular matrix)".into()))?
        .map_err(|e| Error::NumericalFailure(format!("sparse LU failed: {e:?}")))?;
    let solve_scaled = |r: &[f64]| -> Vec<f64> {
        let rhs = Mat::<f64>::from_fn(n, 1, |i, _| scale[i] * r[i]);
        let y = lu.solve(&rhs);
        (0..n).map(|i| scale[i] * y[(i, 0)]).collect()
    };

    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = solve_scaled(b);
    let mut residual = if bnorm > 0.0 { true_residual(a, &x, b) / bnorm } else { 0.0 };
    let mut steps = 0;
    while steps < REFINEMENT_STEPS && residual > 0.0 && residual.is_finite() {
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let dx = solve_scaled(&r);
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + di).collect();
        let res = true_residual(a, &candidate, b) / bnorm;
        if !(res < residual) {
            break;
        }
        x = candidate;
        residual = res;
        steps += 1;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("sparse LU produced non-finite values (singular matrix?)".into()));
    }
    Ok(Solution {
        x,
        iterations: steps,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    #[test]
    fn solves_symmetric_indefinite_system() {
        let a = DenseMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, -3.0, 1.0, 0.0, 1.0, 0.5]);
        let x_true = [1.0, -2.0, 0.5];
        let b = a.matvec(&x_true);
        let sol = solve_direct(&CsrMatrix::from_dense(&a), &b).unwrap();
        for (x, y) in sol.x.iter().zip(x_true) {
            assert!((x - y).abs() < 1e-13);
        }
        assert!(sol.residual < 1e-14);
    }

    #[test]
    fn singular_matrix_is_a_numerical_failure() {
        let a = DenseMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = solve_direct(&CsrMatrix::from_dense(&a), &[1.0, 0.0]).unwrap_err();
        assert!(err.is_numerical(), "{err}");
    }
}
