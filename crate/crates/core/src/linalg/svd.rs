//! One-sided Jacobi SVD and cyclic Jacobi eigen-decomposition for the small
//! dense blocks produced by the embeddings.

use super::DenseMatrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 1000;
const OFF_DIAGONAL_TOL: f64 = 1e-14;

/// Relative singular-value cut used to decide the numerical rank.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// `A = U · diag(σ) · Vᵀ` with `V` square.
///
/// For an `m × n` input there are `n` singular values in descending order;
/// when `m < n` the trailing `n − m` of them are zero. `U` is `m × n` and its
/// columns belonging to zero singular values are zero.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    /// Number of singular values above `rel_tol · σ_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let cut = rel_tol * self.sigma_max();
        self.singular_values.iter().filter(|&&s| s > cut).count()
    }

    /// Right singular vectors beyond the numerical rank, as columns.
    pub fn null_space(&self, rel_tol: f64) -> DenseMatrix {
        let r = if self.sigma_max() == 0.0 { 0 } else { self.rank(rel_tol) };
        self.v.columns(r..self.v.ncols())
    }

    /// Minimal-norm least-squares solution `A⁺ b`.
    pub fn solve_min_norm(&self, b: &[f64], rel_tol: f64) -> Vec<f64> {
        assert_eq!(b.len(), self.u.nrows());
        let r = if self.sigma_max() == 0.0 { 0 } else { self.rank(rel_tol) };
        let n = self.v.nrows();
        let mut x = vec![0.0; n];
        for j in 0..r {
            let coeff: f64 = (0..b.len()).map(|i| self.u[(i, j)] * b[i]).sum::<f64>()
                / self.singular_values[j];
            for (i, xi) in x.iter_mut().enumerate() {
                *xi += coeff * self.v[(i, j)];
            }
        }
        x
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for i in 0..us.nrows() {
            for (j, s) in self.singular_values.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.v.transpose())
    }
}

/// Singular value decomposition by the one-sided (Hestenes) Jacobi method.
///
/// Tall inputs are first reduced to their square `R` factor by Householder QR,
/// which leaves `σ` and `V` unchanged.
pub fn svd(a: &DenseMatrix) -> Result<Svd> {
    if a.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite entry in SVD input".into()));
    }
    let (m, n) = a.shape();
    if m > n {
        let (q, r) = householder_qr(a);
        let inner = jacobi_svd(&r)?;
        let u = q.matmul(&inner.u);
        return Ok(Svd { u, ..inner });
    }
    jacobi_svd(a)
}

fn jacobi_svd(a: &DenseMatrix) -> Result<Svd> {
    let (m, n) = a.shape();
    // Work on columns: w[j] is column j of A·V.
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let scale2 = a.frobenius_norm().powi(2);
    let floor = f64::MIN_POSITIVE.max(scale2 * 1e-60);

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha: f64 = w[p].iter().map(|x| x * x).sum();
                let beta: f64 = w[q].iter().map(|x| x * x).sum();
                let gamma: f64 = w[p].iter().zip(&w[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= OFF_DIAGONAL_TOL * (alpha * beta).sqrt() || gamma.abs() < floor {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "Jacobi SVD did not converge within {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<(usize, f64)> = w
        .iter()
        .enumerate()
        .map(|(j, col)| (j, col.iter().map(|x| x * x).sum::<f64>().sqrt()))
        .collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));

    let mut u = DenseMatrix::zeros(m, n);
    let mut vm = DenseMatrix::zeros(n, n);
    let mut singular_values = Vec::with_capacity(n);
    for (out, &(j, sigma)) in order.iter().enumerate() {
        singular_values.push(sigma);
        if sigma > 0.0 {
            for i in 0..m {
                u[(i, out)] = w[j][i] / sigma;
            }
        }
        for i in 0..n {
            vm[(i, out)] = v[j][i];
        }
    }
    // Columns of U for (numerically) zero singular values are unreliable; zero them.
    let cut = f64::EPSILON * singular_values.first().copied().unwrap_or(0.0) * (m.max(n) as f64);
    for (j, &s) in singular_values.iter().enumerate() {
        if s <= cut {
            for i in 0..m {
                u[(i, j)] = 0.0;
            }
        }
    }
    Ok(Svd {
        u,
        singular_values,
        v: vm,
    })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Thin Householder QR of a tall matrix: `A = Q·R`, `Q` is `m × n`, `R` is `n × n`.
pub fn householder_qr(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (m, n) = a.shape();
    assert!(m >= n, "householder_qr expects a tall matrix");
    let mut r = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let norm: f64 = (k..m).map(|i| r[(i, k)] * r[(i, k)]).sum::<f64>().sqrt();
        let mut vk = vec![0.0; m];
        if norm > 0.0 {
            let alpha = if r[(k, k)] >= 0.0 { -norm } else { norm };
            for i in k..m {
                vk[i] = r[(i, k)];
            }
            vk[k] -= alpha;
            let vnorm2: f64 = vk[k..].iter().map(|x| x * x).sum();
            if vnorm2 > 0.0 {
                for j in k..n {
                    let dot: f64 = (k..m).map(|i| vk[i] * r[(i, j)]).sum();
                    let f = 2.0 * dot / vnorm2;
                    for i in k..m {
                        r[(i, j)] -= f * vk[i];
                    }
                }
                let inv = 1.0 / vnorm2.sqrt();
                vk.iter_mut().for_each(|x| *x *= inv);
            }
        }
        reflectors.push(vk);
    }
    // Accumulate Q = H_0 · … · H_{n−1} applied to the first n unit vectors.
    let mut q = DenseMatrix::zeros(m, n);
    for j in 0..n {
        q[(j, j)] = 1.0;
    }
    for k in (0..n).rev() {
        let vk = &reflectors[k];
        for j in 0..n {
            let dot: f64 = (k..m).map(|i| vk[i] * q[(i, j)]).sum();
            if dot != 0.0 {
                for i in k..m {
                    q[(i, j)] -= 2.0 * dot * vk[i];
                }
            }
        }
    }
    let r_square = DenseMatrix::from_fn(n, n, |i, j| if i <= j { r[(i, j)] } else { 0.0 });
    (q, r_square)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the eigenvectors as columns.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    let mut m = a.clone();
    let mut v = DenseMatrix::identity(n);
    let scale = a.frobenius_norm();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= OFF_DIAGONAL_TOL * scale || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(
            "Jacobi eigen-decomposition did not converge".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok((values, vectors))
}
