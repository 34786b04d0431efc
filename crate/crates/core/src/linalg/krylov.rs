//! Preconditioned conjugate gradient and BiCGStab.

use super::{CsrMatrix, Preconditioner};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Target relative residual `‖b − A·x‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// True relative residual of the returned iterate.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(super) fn true_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    norm(&r)
}

pub(super) fn check_dims(a: &CsrMatrix, b: &[f64]) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Preconditioned CG for symmetric positive definite `A`, started from zero.
pub fn solve_cg(
    a: &CsrMatrix,
    b: &[f64],
    opts: SolverOptions,
    precond: &dyn Preconditioner,
) -> Result<Solution> {
    check_dims(a, b)?;
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(Solution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iter {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "CG breakdown at iteration {it}: pᵀAp = {pap:.3e} (matrix not SPD?)"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= opts.tol * b_norm {
            let residual = true_residual(a, &x, b) / b_norm;
            if residual <= opts.tol {
                return Ok(Solution {
                    x,
                    iterations: it,
                    residual,
                });
            }
            // Recursive residual drifted; restart it from the true one.
            let ax = a.matvec(&x);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: true_residual(a, &x, b) / b_norm,
    })
}

/// Right-preconditioned BiCGStab for general square `A`, started from zero.
pub fn solve_bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    opts: SolverOptions,
    precond: &dyn Preconditioner,
) -> Result<Solution> {
    check_dims(a, b)?;
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(Solution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=opts.max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 || !rho_new.is_finite() {
            // Breakdown: restart with the current residual as shadow vector.
            let ax = a.matvec(&x);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
            r_hat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|vi| *vi = 0.0);
            p.iter_mut().for_each(|pi| *pi = 0.0);
            if norm(&r) <= opts.tol * b_norm {
                return Ok(Solution {
                    x,
                    iterations: it,
                    residual: norm(&r) / b_norm,
                });
            }
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond.apply(&p, &mut p_hat);
        a.matvec_into(&p_hat, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 || !rv.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "BiCGStab breakdown at iteration {it}"
            )));
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= opts.tol * b_norm {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            let residual = true_residual(a, &x, b) / b_norm;
            if residual <= opts.tol {
                return Ok(Solution {
                    x,
                    iterations: it,
                    residual,
                });
            }
            let ax = a.matvec(&x);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
            continue;
        }
        precond.apply(&s, &mut s_hat);
        a.matvec_into(&s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm(&r) <= opts.tol * b_norm {
            let residual = true_residual(a, &x, b) / b_norm;
            if residual <= opts.tol {
                return Ok(Solution {
                    x,
                    iterations: it,
                    residual,
                });
            }
            let ax = a.matvec(&x);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
        }
        if omega == 0.0 {
            return Err(Error::NumericalFailure(format!(
                "BiCGStab stagnation (ω = 0) at iteration {it}"
            )));
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: true_residual(a, &x, b) / b_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{BlockSparseMatrix, DenseMatrix, IdentityPreconditioner};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn opts() -> SolverOptions {
        SolverOptions {
            tol: 1e-12,
            max_iter: 500,
        }
    }

    #[test]
    fn cg_identity_one_iteration() {
        let a = CsrMatrix::identity(5);
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        let sol = solve_cg(&a, &b, opts(), &IdentityPreconditioner).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.x, b.to_vec());
    }

    #[test]
    fn cg_two_by_two() {
        let a = CsrMatrix::from_dense(&DenseMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        let sol = solve_cg(&a, &[1.0, 1.0], opts(), &IdentityPreconditioner).unwrap();
        assert!((sol.x[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!((sol.x[1] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn bicgstab_upper_triangular() {
        let d = DenseMatrix::from_row_slice(3, 3, &[2.0, 1.0, -1.0, 0.0, 3.0, 2.0, 0.0, 0.0, 4.0]);
        let a = CsrMatrix::from_dense(&d);
        let b = [1.0, 2.0, 3.0];
        let sol = solve_bicgstab(&a, &b, opts(), &IdentityPreconditioner).unwrap();
        let exact = d.solve(&b).unwrap();
        for (x, e) in sol.x.iter().zip(&exact) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    fn random_spd_blocks(n_blocks: usize, size: usize, seed: u64) -> BlockSparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = BlockSparseMatrix::new(&vec![size; n_blocks]);
        for b in 0..n_blocks {
            let g = DenseMatrix::from_fn(size, size, |_, _| rng.gen_range(-1.0..1.0));
            let mut d = g.tr_matmul(&g);
            for i in 0..size {
                d[(i, i)] += 4.0;
            }
            m.add_block(b, b, &d);
            if b + 1 < n_blocks {
                let c = DenseMatrix::from_fn(size, size, |_, _| rng.gen_range(-0.3..0.3));
                m.add_block(b, b + 1, &c);
                m.add_block(b + 1, b, &c.transpose());
            }
        }
        m
    }

    #[test]
    fn bicgstab_agrees_with_cg_on_spd() {
        let m = random_spd_blocks(6, 4, 2);
        let a = m.to_csr();
        let b: Vec<f64> = (0..24).map(|i| (i as f64).sin()).collect();
        let pc = m.block_jacobi().unwrap();
        let x1 = solve_cg(&a, &b, opts(), &pc).unwrap().x;
        let x2 = solve_bicgstab(&a, &b, opts(), &pc).unwrap().x;
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn block_jacobi_is_positive_for_spd() {
        let m = random_spd_blocks(4, 3, 9);
        let pc = m.block_jacobi().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut z = vec![0.0; 12];
        for _ in 0..100 {
            let p: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            pc.apply(&p, &mut z);
            assert!(dot(&p, &z) > 0.0);
        }
    }

    #[test]
    fn iterates_are_reproducible() {
        let m = random_spd_blocks(8, 3, 4);
        let a = m.to_csr();
        let b = vec![1.0; 24];
        let pc = m.block_jacobi().unwrap();
        let s1 = solve_cg(&a, &b, opts(), &pc).unwrap();
        let s2 = solve_cg(&a, &b, opts(), &pc).unwrap();
        assert_eq!(s1.x, s2.x);
        assert_eq!(s1.iterations, s2.iterations);
    }

    #[test]
    fn reports_non_convergence() {
        let m = random_spd_blocks(8, 3, 4);
        let a = m.to_csr();
        let b = vec![1.0; 24];
        let err = solve_cg(
            &a,
            &b,
            SolverOptions {
                tol: 1e-14,
                max_iter: 2,
            },
            &IdentityPreconditioner,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 2, .. }));
    }
}
