//! Structured triangular background meshes and their facet topology.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[inline]
pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn dist(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    dot(d, d).sqrt()
}

#[inline]
pub(crate) fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Signed area of the triangle `(a, b, c)`; positive when counter-clockwise.
#[inline]
pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rectangle {
    pub min: Point,
    pub max: Point,
}

impl Rectangle {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    /// `(−a, a)²`.
    pub fn centred_square(half_width: f64) -> Self {
        Self::new([-half_width, -half_width], [half_width, half_width])
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }
}

/// An edge of the mesh with its one or two adjacent triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct Facet {
    pub vertices: [usize; 2],
    /// Adjacent elements, lower index first.
    pub elements: (usize, Option<usize>),
    /// Unit normal pointing out of `elements.0`.
    pub normal: Point,
    /// `h_F`, the edge length.
    pub length: f64,
}

impl Facet {
    pub fn is_interior(&self) -> bool {
        self.elements.1.is_some()
    }

    /// The element across the facet from `element`.
    pub fn neighbour_of(&self, element: usize) -> Option<usize> {
        match self.elements {
            (a, Some(b)) if a == element => Some(b),
            (a, Some(b)) if b == element => Some(a),
            _ => None,
        }
    }
}

/// Conforming counter-clockwise triangulation of a rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundMesh {
    domain: Rectangle,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    facets: Vec<Facet>,
    element_facets: Vec<[usize; 3]>,
    diameters: Vec<f64>,
    areas: Vec<f64>,
    centroids: Vec<Point>,
}

impl BackgroundMesh {
    /// `n × n` cells, each split into two triangles along the diagonal from
    /// its lower-left to its upper-right corner.
    pub fn structured(domain: Rectangle, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("structured mesh needs at least one subdivision"));
        }
        if !(domain.max[0] > domain.min[0] && domain.max[1] > domain.min[1]) {
            return Err(Error::invalid("rectangle must have positive extent"));
        }
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        let dx = (domain.max[0] - domain.min[0]) / n as f64;
        let dy = (domain.max[1] - domain.min[1]) / n as f64;
        for j in 0..=n {
            for i in 0..=n {
                // Hit the far edges exactly so the area sums are exact.
                let x = if i == n { domain.max[0] } else { domain.min[0] + i as f64 * dx };
                let y = if j == n { domain.max[1] } else { domain.min[1] + j as f64 * dy };
                vertices.push([x, y]);
            }
        }
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v11, v01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Ok(Self::from_parts(domain, vertices, triangles))
    }

    /// Red refinement: every triangle is split into four congruent children
    /// through its edge midpoints.
    pub fn uniform_refine(&self) -> Self {
        let mut vertices = self.vertices.clone();
        let mut midpoint = vec![usize::MAX; self.facets.len()];
        for (f, facet) in self.facets.iter().enumerate() {
            let [a, b] = facet.vertices;
            midpoint[f] = vertices.len();
            vertices.push(lerp(self.vertices[a], self.vertices[b], 0.5));
        }
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let mid = |p: usize, q: usize| -> usize {
                let f = self.element_facets[t]
                    .iter()
                    .copied()
                    .find(|&f| {
                        let [x, y] = self.facets[f].vertices;
                        (x == p && y == q) || (x == q && y == p)
                    })
                    .expect("edge of element missing from facet list");
                midpoint[f]
            };
            let (mab, mbc, mca) = (mid(a, b), mid(b, c), mid(c, a));
            triangles.push([a, mab, mca]);
            triangles.push([mab, b, mbc]);
            triangles.push([mca, mbc, c]);
            triangles.push([mab, mbc, mca]);
        }
        Self::from_parts(self.domain, vertices, triangles)
    }

    fn from_parts(domain: Rectangle, vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Self {
        let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
        let mut facets: Vec<Facet> = Vec::new();
        let mut element_facets = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut local = [0usize; 3];
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let f = *edge_map.entry(key).or_insert_with(|| {
                    let (pa, pb) = (vertices[a], vertices[b]);
                    let length = dist(pa, pb);
                    // (a, b) runs counter-clockwise around t, so the outward
                    // normal of t is the clockwise rotation of b − a.
                    let d = sub(pb, pa);
                    facets.push(Facet {
                        vertices: [a, b],
                        elements: (t, None),
                        normal: [d[1] / length, -d[0] / length],
                        length,
                    });
                    facets.len() - 1
                });
                if facets[f].elements.0 != t {
                    // Elements are visited in increasing order, so t is the larger index.
                    facets[f].elements.1 = Some(t);
                }
                local[e] = f;
            }
            element_facets.push(local);
        }
        let diameters = triangles
            .iter()
            .map(|&[a, b, c]| {
                let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
                dist(pa, pb).max(dist(pb, pc)).max(dist(pc, pa))
            })
            .collect();
        let areas = triangles
            .iter()
            .map(|&[a, b, c]| signed_area(vertices[a], vertices[b], vertices[c]))
            .collect();
        let centroids = triangles
            .iter()
            .map(|&[a, b, c]| {
                [
                    (vertices[a][0] + vertices[b][0] + vertices[c][0]) / 3.0,
                    (vertices[a][1] + vertices[b][1] + vertices[c][1]) / 3.0,
                ]
            })
            .collect();
        Self {
            domain,
            vertices,
            triangles,
            facets,
            element_facets,
            diameters,
            areas,
            centroids,
        }
    }

    pub fn domain(&self) -> Rectangle {
        self.domain
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn element_vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn element_facets(&self, t: usize) -> [usize; 3] {
        self.element_facets[t]
    }

    /// `h_T`, the longest edge.
    pub fn diameter(&self, t: usize) -> f64 {
        self.diameters[t]
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn centroid(&self, t: usize) -> Point {
        self.centroids[t]
    }

    pub fn max_diameter(&self) -> f64 {
        self.diameters.iter().copied().fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Elements sharing a facet with `t`, in facet order.
    pub fn neighbours(&self, t: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.element_facets[t]
            .iter()
            .filter_map(move |&f| self.facets[f].neighbour_of(t).map(|n| (f, n)))
    }

    /// Plain-text dump: `v x y` per vertex, then `t i j k` per triangle.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for v in &self.vertices {
            writeln!(out, "v {:.17e} {:.17e}", v[0], v[1])?;
        }
        for t in &self.triangles {
            writeln!(out, "t {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}
