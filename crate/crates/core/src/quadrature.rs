//! Gauss rules on segments and triangles.

use crate::mesh::{dist, lerp, signed_area, Point};

/// Points and positive weights; boundary rules also carry a unit normal per point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub normals: Option<Vec<Point>>,
}

impl QuadratureRule {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Sum of the weights: the measure of the integration region.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }

    pub(crate) fn append(&mut self, other: QuadratureRule) {
        self.points.extend(other.points);
        self.weights.extend(other.weights);
        if let Some(n) = other.normals {
            self.normals.get_or_insert_with(Vec::new).extend(n);
        }
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 0.5 * w;
    }
    // Ascending on [0, 1].
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| nodes[a].total_cmp(&nodes[b]));
    (
        order.iter().map(|&i| nodes[i]).collect(),
        order.iter().map(|&i| weights[i]).collect(),
    )
}

/// Number of Gauss points exact for degree `order` polynomials in 1D.
pub fn points_for_order(order: usize) -> usize {
    order / 2 + 1
}

/// Gauss rule on the segment `[a, b]`, exact to degree `order`.
pub fn segment_rule(a: Point, b: Point, order: usize) -> QuadratureRule {
    let (nodes, weights) = gauss_legendre(points_for_order(order));
    let len = dist(a, b);
    QuadratureRule {
        points: nodes.iter().map(|&t| lerp(a, b, t)).collect(),
        weights: weights.iter().map(|w| w * len).collect(),
        normals: None,
    }
}

/// Collapsed (Duffy) Gauss rule on a triangle, exact to degree `order`.
pub fn triangle_rule(a: Point, b: Point, c: Point, order: usize) -> QuadratureRule {
    let area = signed_area(a, b, c).abs();
    let (nu, wu) = gauss_legendre(points_for_order(order + 1));
    let (nv, wv) = gauss_legendre(points_for_order(order));
    let mut rule = QuadratureRule {
        points: Vec::with_capacity(nu.len() * nv.len()),
        weights: Vec::with_capacity(nu.len() * nv.len()),
        normals: None,
    };
    for (&u, &w_u) in nu.iter().zip(&wu) {
        for (&v, &w_v) in nv.iter().zip(&wv) {
            let (xi, eta) = (u, v * (1.0 - u));
            rule.points.push([
                a[0] + (b[0] - a[0]) * xi + (c[0] - a[0]) * eta,
                a[1] + (b[1] - a[1]) * xi + (c[1] - a[1]) * eta,
            ]);
            rule.weights.push(2.0 * area * w_u * w_v * (1.0 - u));
        }
    }
    rule
}
