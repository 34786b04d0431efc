//! Scaled monomial bases of `ℙ^k` on each element, in world coordinates.
//!
//! On element `T` with centroid `c_T` and diameter `h_T` the basis is
//! `((x − c_T) / h_T)^α` for `|α| ≤ k`, ordered by total degree and, within
//! one degree, by decreasing power of `x̂`: `1, x̂, ŷ, x̂², x̂ŷ, ŷ², …`.
//! Evaluating outside `T` is the canonical polynomial extension.

use crate::cutgeom::CutTopology;
use crate::linalg::DenseMatrix;
use crate::mesh::{BackgroundMesh, Point};

pub const MAX_DEGREE: usize = 6;

/// `dim ℙ^k` in two dimensions; zero for negative degrees.
pub const fn dim(k: isize) -> usize {
    if k < 0 {
        0
    } else {
        let k = k as usize;
        (k + 1) * (k + 2) / 2
    }
}

/// Exponent pairs `(a, b)` of `x̂^a ŷ^b` in basis order.
pub fn exponents(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(dim(k as isize));
    for d in 0..=k {
        for a in (0..=d).rev() {
            out.push((a, d - a));
        }
    }
    out
}

/// Position of `x̂^a ŷ^b` in the basis order.
#[inline]
pub fn index_of(a: usize, b: usize) -> usize {
    let d = a + b;
    dim(d as isize - 1) + (d - a)
}

/// Centre and scale of the scaled monomials on one element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub centre: Point,
    pub h: f64,
}

impl Frame {
    pub fn of_element(mesh: &BackgroundMesh, t: usize) -> Self {
        Self {
            centre: mesh.centroid(t),
            h: mesh.diameter(t),
        }
    }

    #[inline]
    pub fn local(&self, p: Point) -> Point {
        [(p[0] - self.centre[0]) / self.h, (p[1] - self.centre[1]) / self.h]
    }
}

/// Values, gradients and Laplacians of all basis functions at one point.
#[derive(Clone, Debug, Default)]
pub struct BasisValues {
    pub values: Vec<f64>,
    pub gradients: Vec<Point>,
    pub laplacians: Vec<f64>,
}

impl BasisValues {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Evaluate the full basis of degree `k` at `p`.
pub fn eval_basis(frame: &Frame, k: usize, p: Point) -> BasisValues {
    let mut out = BasisValues::default();
    eval_basis_into(frame, k, p, &mut out);
    out
}

/// As [`eval_basis`], reusing the buffers in `out`.
pub fn eval_basis_into(frame: &Frame, k: usize, p: Point, out: &mut BasisValues) {
    let n = dim(k as isize);
    let [x, y] = frame.local(p);
    let mut xp = [1.0; MAX_DEGREE + 2];
    let mut yp = [1.0; MAX_DEGREE + 2];
    for i in 1..=k {
        xp[i] = xp[i - 1] * x;
        yp[i] = yp[i - 1] * y;
    }
    let inv_h = 1.0 / frame.h;
    let inv_h2 = inv_h * inv_h;
    out.values.clear();
    out.gradients.clear();
    out.laplacians.clear();
    out.values.reserve(n);
    for d in 0..=k {
        for a in (0..=d).rev() {
            let b = d - a;
            out.values.push(xp[a] * yp[b]);
            let gx = if a > 0 { a as f64 * xp[a - 1] * yp[b] } else { 0.0 };
            let gy = if b > 0 { b as f64 * xp[a] * yp[b - 1] } else { 0.0 };
            out.gradients.push([gx * inv_h, gy * inv_h]);
            let lxx = if a > 1 { (a * (a - 1)) as f64 * xp[a - 2] * yp[b] } else { 0.0 };
            let lyy = if b > 1 { (b * (b - 1)) as f64 * xp[a] * yp[b - 2] } else { 0.0 };
            out.laplacians.push((lxx + lyy) * inv_h2);
        }
    }
}

/// Value, gradient and Laplacian of the polynomial with coefficients `coeffs`.
pub fn eval(frame: &Frame, k: usize, coeffs: &[f64], p: Point) -> (f64, Point, f64) {
    assert_eq!(coeffs.len(), dim(k as isize), "coefficient vector has wrong length");
    let b = eval_basis(frame, k, p);
    let mut v = 0.0;
    let mut g = [0.0, 0.0];
    let mut l = 0.0;
    for (j, &c) in coeffs.iter().enumerate() {
        v += c * b.values[j];
        g[0] += c * b.gradients[j][0];
        g[1] += c * b.gradients[j][1];
        l += c * b.laplacians[j];
    }
    (v, g, l)
}

/// Exact matrix of `Δ: ℙ^k → ℙ^{k−2}` in scaled monomials (`L × N`).
pub fn laplacian_coeff_matrix(h: f64, k: usize) -> DenseMatrix {
    let rows = dim(k as isize - 2);
    let cols = dim(k as isize);
    let mut c = DenseMatrix::zeros(rows, cols);
    let s = 1.0 / (h * h);
    for (j, (a, b)) in exponents(k).into_iter().enumerate() {
        if a >= 2 {
            c[(index_of(a - 2, b), j)] += (a * (a - 1)) as f64 * s;
        }
        if b >= 2 {
            c[(index_of(a, b - 2), j)] += (b * (b - 1)) as f64 * s;
        }
    }
    c
}

/// Coefficients (in the basis of `to`) of the polynomial with coefficients
/// `coeffs` in the basis of `from`; exact re-expansion of the same polynomial.
pub fn change_frame(from: &Frame, to: &Frame, k: usize, coeffs: &[f64]) -> Vec<f64> {
    // x̂_from = s·x̂_to + d with s = h_to/h_from, d = (c_to − c_from)/h_from.
    let s = to.h / from.h;
    let d = [
        (to.centre[0] - from.centre[0]) / from.h,
        (to.centre[1] - from.centre[1]) / from.h,
    ];
    let binom = |n: usize, r: usize| -> f64 {
        (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    };
    let mut out = vec![0.0; coeffs.len()];
    for (j, (a, b)) in exponents(k).into_iter().enumerate() {
        if coeffs[j] == 0.0 {
            continue;
        }
        // (s x + dx)^a (s y + dy)^b
        for i in 0..=a {
            let cx = binom(a, i) * s.powi(i as i32) * d[0].powi((a - i) as i32);
            for l in 0..=b {
                let cy = binom(b, l) * s.powi(l as i32) * d[1].powi((b - l) as i32);
                out[index_of(i, l)] += coeffs[j] * cx * cy;
            }
        }
    }
    out
}

/// Degree-`k` discontinuous space on the active mesh; element blocks are
/// numbered in active-element order.
#[derive(Clone, Debug)]
pub struct DgSpace {
    pub k: usize,
    frames: Vec<Frame>,
    elements: Vec<usize>,
}

impl DgSpace {
    pub fn new(mesh: &BackgroundMesh, topology: &CutTopology, k: usize) -> Self {
        assert!(k <= MAX_DEGREE, "polynomial degree above {MAX_DEGREE} is not supported");
        let elements = topology.active().to_vec();
        let frames = elements.iter().map(|&t| Frame::of_element(mesh, t)).collect();
        Self { k, frames, elements }
    }

    /// `N_T`.
    pub fn local_dim(&self) -> usize {
        dim(self.k as isize)
    }

    /// `N = Σ_T N_T`.
    pub fn ndofs(&self) -> usize {
        self.local_dim() * self.elements.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Background element of active element `a`.
    pub fn element(&self, a: usize) -> usize {
        self.elements[a]
    }

    pub fn frame(&self, a: usize) -> &Frame {
        &self.frames[a]
    }

    pub fn dof_range(&self, a: usize) -> std::ops::Range<usize> {
        let n = self.local_dim();
        a * n..(a + 1) * n
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        vec![self.local_dim(); self.elements.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{svd, RANK_TOLERANCE};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame() -> Frame {
        Frame {
            centre: [0.3, -0.2],
            h: 0.4,
        }
    }

    #[test]
    fn dimensions() {
        assert_eq!(dim(0), 1);
        assert_eq!(dim(2), 6);
        assert_eq!(dim(5), 21);
        assert_eq!(dim(-1), 0);
        for k in 0..=MAX_DEGREE {
            let e = exponents(k);
            assert_eq!(e.len(), dim(k as isize));
            for (i, &(a, b)) in e.iter().enumerate() {
                assert_eq!(index_of(a, b), i);
            }
        }
        assert_eq!(exponents(2), vec![(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]);
    }

    #[test]
    fn constant_mode() {
        let mut c = vec![0.0; 6];
        c[0] = 1.0;
        let (v, g, l) = eval(&frame(), 2, &c, [5.0, 7.0]);
        assert_eq!((v, g, l), (1.0, [0.0, 0.0], 0.0));
    }

    #[test]
    fn x2_minus_y2_is_harmonic() {
        let f = frame();
        let mut c = vec![0.0; 6];
        c[index_of(2, 0)] = 1.0;
        c[index_of(0, 2)] = -1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            assert!(eval(&f, 2, &c, p).2.abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let f = frame();
        let k = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c: Vec<f64> = (0..dim(k as isize)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let step = 1e-6 * f.h;
        for _ in 0..20 {
            let p = [
                f.centre[0] + rng.gen_range(-0.5..0.5) * f.h,
                f.centre[1] + rng.gen_range(-0.5..0.5) * f.h,
            ];
            let (_, g, _) = eval(&f, k, &c, p);
            let fd = |dx: f64, dy: f64| eval(&f, k, &c, [p[0] + dx, p[1] + dy]).0;
            let gx = (fd(step, 0.0) - fd(-step, 0.0)) / (2.0 * step);
            let gy = (fd(0.0, step) - fd(0.0, -step)) / (2.0 * step);
            let scale = g[0].hypot(g[1]).max(1.0);
            assert!((g[0] - gx).abs() <= 1e-6 * scale);
            assert!((g[1] - gy).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn laplacian_matrix_small_degrees() {
        assert_eq!(laplacian_coeff_matrix(0.5, 1).shape(), (0, 3));
        let c = laplacian_coeff_matrix(0.5, 2);
        assert_eq!(c.row(0), &[0.0, 0.0, 0.0, 8.0, 0.0, 8.0]);
    }

    #[test]
    fn laplacian_matrix_rank_and_kernel_dimension() {
        for k in 2..=5 {
            let c = laplacian_coeff_matrix(0.3, k);
            let s = svd(&c).unwrap();
            assert_eq!(s.rank(RANK_TOLERANCE), k * (k - 1) / 2);
            assert_eq!(dim(k as isize) - s.rank(RANK_TOLERANCE), 2 * k + 1);
        }
    }

    #[test]
    fn laplacian_matrix_matches_pointwise_laplacian() {
        let f = frame();
        let k = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c: Vec<f64> = (0..dim(k as isize)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lap_coeffs = laplacian_coeff_matrix(f.h, k).matvec(&c);
        for _ in 0..10 {
            let p = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let direct = eval(&f, k, &c, p).2;
            let via_matrix = eval(&f, k - 2, &lap_coeffs, p).0;
            assert!((direct - via_matrix).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn change_frame_preserves_polynomial() {
        let from = frame();
        let to = Frame {
            centre: [-0.1, 0.25],
            h: 0.7,
        };
        let k = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c: Vec<f64> = (0..dim(k as isize)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c2 = change_frame(&from, &to, k, &c);
        for _ in 0..10 {
            let p = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let a = eval(&from, k, &c, p).0;
            let b = eval(&to, k, &c2, p).0;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_element_mass_matrix_is_well_conditioned() {
        use crate::linalg::symmetric_eigen;
        use crate::quadrature::triangle_rule;
        let (a, b, c) = ([0.0, 0.0], [0.25, 0.0], [0.25, 0.25]);
        let f = Frame {
            centre: [0.5 / 3.0, 0.25 / 3.0],
            h: 0.25 * 2f64.sqrt(),
        };
        for k in 0..=MAX_DEGREE {
            let rule = triangle_rule(a, b, c, 2 * k);
            let n = dim(k as isize);
            let mut m = DenseMatrix::zeros(n, n);
            for (&p, &w) in rule.points.iter().zip(&rule.weights) {
                let v = eval_basis(&f, k, p).values;
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] += w * v[i] * v[j];
                    }
                }
            }
            // Raw monomials differ in scale by h^|α|; measure the condition
            // after symmetric diagonal scaling.
            let d: Vec<f64> = (0..n).map(|i| m[(i, i)].sqrt()).collect();
            let m = DenseMatrix::from_fn(n, n, |i, j| m[(i, j)] / (d[i] * d[j]));
            let (eig, _) = symmetric_eigen(&m).unwrap();
            let cond = eig[n - 1] / eig[0];
            assert!(eig[0] > 0.0 && cond < 1e8, "k = {k}: condition {cond:.3e}");
        }
    }

    #[test]
    fn evaluation_is_invariant_under_rigid_translation() {
        let k = 3;
        let f1 = frame();
        let shift = [0.73, -1.41];
        let f2 = Frame {
            centre: [f1.centre[0] + shift[0], f1.centre[1] + shift[1]],
            h: f1.h,
        };
        let c: Vec<f64> = (0..dim(k as isize)).map(|i| (i as f64).cos()).collect();
        for p in [[0.1, 0.2], [-0.3, 0.05], [0.4, -0.4]] {
            let q = [p[0] + shift[0], p[1] + shift[1]];
            let a = eval(&f1, k, &c, p).0;
            let b = eval(&f2, k, &c, q).0;
            assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
        }
    }
}
