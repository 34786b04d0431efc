//! Element classification against a level set and quadrature on the
//! piecewise-linear discrete domain `Ω_h = {φ_h < 0}`, where `φ_h` is the
//! nodal interpolant of the level set.

mod levelset;

pub use levelset::{predefined, CircleObstacle, Constant, Disc, FnLevelSet, HalfPlane, LevelSet, Ring};

use crate::error::{Error, Result};
use crate::mesh::{dist, lerp, signed_area, BackgroundMesh, Point};
use crate::quadrature::{segment_rule, triangle_rule, QuadratureRule};

/// Vertex values that are exactly zero are moved to `+ZERO_SHIFT · h` for the
/// cut geometry. Classification treats them as neutral, so an element touching
/// Γ only at vertices is never active with zero measure.
pub const ZERO_SHIFT: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementClass {
    Inside,
    Outside,
    Cut,
}

impl ElementClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementClass::Inside => "inside",
            ElementClass::Outside => "outside",
            ElementClass::Cut => "cut",
        }
    }
}

/// Active mesh, cut mesh and active interior facets.
#[derive(Clone, Debug, PartialEq)]
pub struct CutTopology {
    classes: Vec<ElementClass>,
    active: Vec<usize>,
    cut: Vec<usize>,
    active_index: Vec<Option<usize>>,
    interior_facets: Vec<usize>,
    boundary_facets: Vec<usize>,
    raw_values: Vec<f64>,
    vertex_values: Vec<f64>,
}

impl CutTopology {
    pub fn class(&self, t: usize) -> ElementClass {
        self.classes[t]
    }

    pub fn classes(&self) -> &[ElementClass] {
        &self.classes
    }

    /// Active elements (inside or cut), ascending.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Cut elements, ascending.
    pub fn cut(&self) -> &[usize] {
        &self.cut
    }

    pub fn num_active(&self) -> usize {
        self.active.len()
    }

    /// Position of element `t` in [`Self::active`].
    pub fn active_index(&self, t: usize) -> Option<usize> {
        self.active_index[t]
    }

    pub fn is_active(&self, t: usize) -> bool {
        self.active_index[t].is_some()
    }

    /// Interior facets whose two neighbours are both active.
    pub fn interior_facets(&self) -> &[usize] {
        &self.interior_facets
    }

    /// Facets on the boundary of the background rectangle owned by an active element.
    pub fn boundary_facets(&self) -> &[usize] {
        &self.boundary_facets
    }

    /// Nodal values of `φ_h` after the zero shift.
    pub fn vertex_values(&self) -> &[f64] {
        &self.vertex_values
    }

    /// Nodal values of `φ` before the zero shift.
    pub fn raw_vertex_values(&self) -> &[f64] {
        &self.raw_values
    }
}

/// Classify every background element by the signs of `φ` at its vertices.
pub fn classify(mesh: &BackgroundMesh, levelset: &dyn LevelSet) -> Result<CutTopology> {
    let shift = ZERO_SHIFT * mesh.max_diameter();
    let raw: Vec<f64> = mesh.vertices().iter().map(|&p| levelset.value(p)).collect();
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("level set is not finite at vertex {i}")));
    }
    let mut classes = Vec::with_capacity(mesh.num_elements());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if tri.iter().all(|&v| raw[v] == 0.0) {
            return Err(Error::DegenerateGeometry { element: t });
        }
        // A zero vertex value never makes an element cut on its own.
        let vals = tri.map(|v| raw[v]);
        let class = if vals.iter().all(|&s| s >= 0.0) {
            ElementClass::Outside
        } else if vals.iter().all(|&s| s <= 0.0) {
            ElementClass::Inside
        } else {
            ElementClass::Cut
        };
        classes.push(class);
    }
    let vertex_values: Vec<f64> = raw
        .iter()
        .map(|&v| if v == 0.0 { shift } else { v })
        .collect();

    let active: Vec<usize> = (0..classes.len())
        .filter(|&t| classes[t] != ElementClass::Outside)
        .collect();
    let cut: Vec<usize> = (0..classes.len())
        .filter(|&t| classes[t] == ElementClass::Cut)
        .collect();
    let mut active_index = vec![None; classes.len()];
    for (i, &t) in active.iter().enumerate() {
        active_index[t] = Some(i);
    }
    let mut interior_facets = Vec::new();
    let mut boundary_facets = Vec::new();
    for (f, facet) in mesh.facets().iter().enumerate() {
        match facet.elements {
            (a, Some(b)) if active_index[a].is_some() && active_index[b].is_some() => {
                interior_facets.push(f)
            }
            (a, None) if active_index[a].is_some() => boundary_facets.push(f),
            _ => {}
        }
    }
    Ok(CutTopology {
        classes,
        active,
        cut,
        active_index,
        interior_facets,
        boundary_facets,
        raw_values: raw,
        vertex_values,
    })
}

/// A background mesh together with its classification; builds the cut rules.
#[derive(Clone, Copy)]
pub struct CutMesh<'a> {
    pub mesh: &'a BackgroundMesh,
    pub topology: &'a CutTopology,
}

impl<'a> CutMesh<'a> {
    pub fn new(mesh: &'a BackgroundMesh, topology: &'a CutTopology) -> Self {
        Self { mesh, topology }
    }

    fn element_values(&self, t: usize) -> [f64; 3] {
        self.mesh.triangles()[t].map(|v| self.topology.vertex_values[v])
    }

    /// Rule on `T ∩ Ω_h` exact to degree `order` (for polynomial integrands).
    pub fn volume_rule(&self, t: usize, order: usize) -> Result<QuadratureRule> {
        match self.topology.class(t) {
            ElementClass::Outside => Err(Error::invalid(format!(
                "volume rule requested on outside element {t}"
            ))),
            ElementClass::Inside => {
                let [a, b, c] = self.mesh.element_vertices(t);
                Ok(triangle_rule(a, b, c, order))
            }
            ElementClass::Cut => Ok(clipped_rule(
                self.mesh.element_vertices(t),
                self.element_values(t),
                order,
            )),
        }
    }

    /// Rule on `T \ Ω_h` (the part where `φ_h > 0`).
    pub fn outside_volume_rule(&self, t: usize, order: usize) -> QuadratureRule {
        let vals = self.element_values(t).map(|s| -s);
        match self.topology.class(t) {
            ElementClass::Inside => QuadratureRule::empty(),
            ElementClass::Outside => {
                let [a, b, c] = self.mesh.element_vertices(t);
                triangle_rule(a, b, c, order)
            }
            ElementClass::Cut => clipped_rule(self.mesh.element_vertices(t), vals, order),
        }
    }

    /// Full-triangle rule regardless of the cut.
    pub fn full_rule(&self, t: usize, order: usize) -> QuadratureRule {
        let [a, b, c] = self.mesh.element_vertices(t);
        triangle_rule(a, b, c, order)
    }

    /// Facets of an inside element along which `Γ_h` runs: both end values
    /// vanish and the neighbour is inactive.
    pub fn interface_facets(&self, t: usize) -> Vec<usize> {
        if self.topology.class(t) != ElementClass::Inside {
            return Vec::new();
        }
        self.mesh
            .element_facets(t)
            .into_iter()
            .filter(|&f| {
                let facet = &self.mesh.facets()[f];
                let zero = facet.vertices.iter().all(|&v| self.topology.raw_values[v] == 0.0);
                zero && facet
                    .neighbour_of(t)
                    .is_some_and(|n| !self.topology.is_active(n))
            })
            .collect()
    }

    /// Rule on `Γ_h ∩ ∂(T ∩ Ω_h)` with the unit normal pointing out of `Ω_h`.
    /// Empty for inside elements that do not touch `Γ_h` along a facet.
    pub fn boundary_rule(&self, t: usize, order: usize) -> Result<QuadratureRule> {
        match self.topology.class(t) {
            ElementClass::Outside => Err(Error::invalid(format!(
                "boundary rule requested on outside element {t}"
            ))),
            ElementClass::Inside => {
                let mut rule = QuadratureRule {
                    normals: Some(Vec::new()),
                    ..QuadratureRule::empty()
                };
                for f in self.interface_facets(t) {
                    let facet = &self.mesh.facets()[f];
                    let [ia, ib] = facet.vertices;
                    let mut seg = segment_rule(self.mesh.vertices()[ia], self.mesh.vertices()[ib], order);
                    let n = if facet.elements.0 == t {
                        facet.normal
                    } else {
                        [-facet.normal[0], -facet.normal[1]]
                    };
                    seg.normals = Some(vec![n; seg.len()]);
                    rule.append(seg);
                }
                Ok(rule)
            }
            ElementClass::Cut => {
                let verts = self.mesh.element_vertices(t);
                let vals = self.element_values(t);
                let (p, q) = interface_segment(verts, vals).ok_or_else(|| {
                    Error::Internal(format!("cut element {t} has no interface segment"))
                })?;
                let normal = linear_gradient_direction(verts, vals);
                let mut rule = segment_rule(p, q, order);
                rule.normals = Some(vec![normal; rule.len()]);
                Ok(rule)
            }
        }
    }

    /// Rule on `F ∩ Ω_h`; empty when the facet lies in `φ_h ≥ 0`.
    pub fn facet_rule(&self, f: usize, order: usize) -> QuadratureRule {
        let facet = &self.mesh.facets()[f];
        let [ia, ib] = facet.vertices;
        let (a, b) = (self.mesh.vertices()[ia], self.mesh.vertices()[ib]);
        let (ra, rb) = (self.topology.raw_values[ia], self.topology.raw_values[ib]);
        if ra == 0.0 || rb == 0.0 {
            // Γ_h passes through an end point: the facet is inside up to that point.
            let inside = if ra == 0.0 && rb == 0.0 {
                let (e1, e2) = facet.elements;
                self.topology.is_active(e1) && e2.is_none_or(|e| self.topology.is_active(e))
            } else {
                ra.min(rb) < 0.0
            };
            return if inside { segment_rule(a, b, order) } else { QuadratureRule::empty() };
        }
        let (sa, sb) = (self.topology.vertex_values[ia], self.topology.vertex_values[ib]);
        match (sa < 0.0, sb < 0.0) {
            (true, true) => segment_rule(a, b, order),
            (false, false) => QuadratureRule::empty(),
            (true, false) => segment_rule(a, lerp(a, b, sa / (sa - sb)), order),
            (false, true) => segment_rule(lerp(a, b, sa / (sa - sb)), b, order),
        }
    }

    /// `|F ∩ Ω_h|`.
    pub fn facet_measure(&self, f: usize) -> f64 {
        self.facet_rule(f, 0).measure()
    }
}

/// Integration rule on `{s < 0}` inside the triangle, `s` linear with vertex values `vals`.
fn clipped_rule(verts: [Point; 3], vals: [f64; 3], order: usize) -> QuadratureRule {
    let poly = clip_polygon(verts, vals);
    let mut rule = QuadratureRule::empty();
    for i in 1..poly.len().saturating_sub(1) {
        let (a, b, c) = (poly[0], poly[i], poly[i + 1]);
        if signed_area(a, b, c).abs() > 0.0 {
            rule.append(triangle_rule(a, b, c, order));
        }
    }
    rule
}

/// Vertices of `{s < 0} ∩ T` in counter-clockwise order (one half-plane clip).
pub(crate) fn clip_polygon(verts: [Point; 3], vals: [f64; 3]) -> Vec<Point> {
    let mut poly = Vec::with_capacity(4);
    for i in 0..3 {
        let j = (i + 1) % 3;
        if vals[i] < 0.0 {
            poly.push(verts[i]);
        }
        if (vals[i] < 0.0) != (vals[j] < 0.0) {
            poly.push(lerp(verts[i], verts[j], vals[i] / (vals[i] - vals[j])));
        }
    }
    poly
}

/// The two points where the zero line of the interpolant crosses the triangle edges.
fn interface_segment(verts: [Point; 3], vals: [f64; 3]) -> Option<(Point, Point)> {
    let mut pts = Vec::with_capacity(2);
    for i in 0..3 {
        let j = (i + 1) % 3;
        if (vals[i] < 0.0) != (vals[j] < 0.0) {
            pts.push(lerp(verts[i], verts[j], vals[i] / (vals[i] - vals[j])));
        }
    }
    (pts.len() == 2).then(|| (pts[0], pts[1]))
}

/// Unit vector along the gradient of the linear interpolant.
fn linear_gradient_direction(verts: [Point; 3], vals: [f64; 3]) -> Point {
    let [a, b, c] = verts;
    let [sa, sb, sc] = vals;
    let gx = sa * (b[1] - c[1]) + sb * (c[1] - a[1]) + sc * (a[1] - b[1]);
    let gy = sa * (c[0] - b[0]) + sb * (a[0] - c[0]) + sc * (b[0] - a[0]);
    // The common factor 1/(2|T|) is positive for counter-clockwise triangles.
    let n = gx.hypot(gy);
    [gx / n, gy / n]
}

/// `|Γ_h ∩ T|` of a cut element, computed directly from the two interface points.
pub fn interface_length(mesh: &BackgroundMesh, topology: &CutTopology, t: usize) -> f64 {
    let verts = mesh.element_vertices(t);
    let vals = mesh.triangles()[t].map(|v| topology.vertex_values[v]);
    interface_segment(verts, vals).map_or(0.0, |(p, q)| dist(p, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Rectangle;

    /// Unit square split into (0,0),(1,0),(1,1) and (0,0),(1,1),(0,1).
    fn unit_square() -> BackgroundMesh {
        BackgroundMesh::structured(Rectangle::new([0.0, 0.0], [1.0, 1.0]), 1).unwrap()
    }

    fn square(n: usize) -> BackgroundMesh {
        BackgroundMesh::structured(Rectangle::centred_square(1.0), n).unwrap()
    }

    #[test]
    fn constant_negative_is_all_inside() {
        let m = square(4);
        let topo = classify(&m, &Constant(-1.0)).unwrap();
        assert_eq!(topo.num_active(), m.num_elements());
        assert!(topo.cut().is_empty());
    }

    #[test]
    fn constant_positive_is_empty() {
        let m = square(4);
        let topo = classify(&m, &Constant(1.0)).unwrap();
        assert_eq!(topo.num_active(), 0);
        assert!(topo.interior_facets().is_empty());
    }

    #[test]
    fn zero_level_set_is_degenerate() {
        let err = classify(&square(2), &Constant(0.0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry { element: 0 }));
    }

    #[test]
    fn zero_vertex_values_do_not_cut() {
        // φ = x vanishes on the vertical grid line through the origin.
        let m = square(2);
        let topo = classify(&m, &HalfPlane { normal: [1.0, 0.0], offset: 0.0 }).unwrap();
        assert!(topo.cut().is_empty());
        for t in 0..m.num_elements() {
            let c = m.centroid(t);
            let expected = if c[0] < 0.0 { ElementClass::Inside } else { ElementClass::Outside };
            assert_eq!(topo.class(t), expected, "element {t}");
        }
    }

    #[test]
    fn outside_element_has_no_volume_rule() {
        let m = square(2);
        let topo = classify(&m, &Constant(1.0)).unwrap();
        assert!(CutMesh::new(&m, &topo).volume_rule(0, 2).is_err());
    }

    #[test]
    fn axis_aligned_cut_of_triangle() {
        let verts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let vals = verts.map(|p| p[0] - 0.5);
        let rule = clipped_rule(verts, vals, 4);
        assert!((rule.measure() - 0.375).abs() < 1e-15);
        let (p, q) = interface_segment(verts, vals).unwrap();
        assert!((dist(p, q) - 0.5).abs() < 1e-15);
        assert_eq!(linear_gradient_direction(verts, vals), [1.0, 0.0]);
        let m = unit_square();
        let topo = classify(&m, &HalfPlane { normal: [1.0, 0.0], offset: 0.5 }).unwrap();
        let cm = CutMesh::new(&m, &topo);
        let b = cm.boundary_rule(0, 3).unwrap();
        assert!((b.measure() - 0.5).abs() < 1e-15);
        assert!(b.normals.unwrap().iter().all(|n| *n == [1.0, 0.0]));
    }

    #[test]
    fn boundary_rule_on_uncut_elements() {
        let m = square(2);
        let topo = classify(&m, &Constant(-1.0)).unwrap();
        assert!(CutMesh::new(&m, &topo).boundary_rule(0, 2).unwrap().is_empty());
        let topo = classify(&m, &Constant(1.0)).unwrap();
        assert!(CutMesh::new(&m, &topo).boundary_rule(0, 2).is_err());
    }

    #[test]
    fn interface_along_a_mesh_edge() {
        // φ = y − x vanishes on the diagonal of the unit square.
        let m = unit_square();
        let topo = classify(&m, &HalfPlane { normal: [-1.0, 1.0], offset: 0.0 }).unwrap();
        assert_eq!(topo.class(0), ElementClass::Inside);
        assert_eq!(topo.class(1), ElementClass::Outside);
        let cm = CutMesh::new(&m, &topo);
        assert_eq!(cm.interface_facets(0).len(), 1);
        let b = cm.boundary_rule(0, 2).unwrap();
        assert!((b.measure() - 2f64.sqrt()).abs() < 1e-15);
        let n = b.normals.unwrap()[0];
        assert!((n[0] + 0.5f64.sqrt()).abs() < 1e-15 && (n[1] - 0.5f64.sqrt()).abs() < 1e-15);
        let diag = cm.interface_facets(0)[0];
        assert!(cm.facet_rule(diag, 2).is_empty());
    }

    #[test]
    fn facet_rule_fractions() {
        let m = unit_square();
        let diag = m
            .facets()
            .iter()
            .position(|f| f.is_interior())
            .unwrap();
        let len = m.facets()[diag].length;
        for (va, vb, frac) in [(-1.0, -1.0, 1.0), (-1.0, 1.0, 0.5), (-1.0, 3.0, 0.25), (2.0, 1.0, 0.0)] {
            let mut topo = classify(&m, &Constant(-1.0)).unwrap();
            let [ia, ib] = m.facets()[diag].vertices;
            topo.vertex_values[ia] = va;
            topo.vertex_values[ib] = vb;
            let r = CutMesh::new(&m, &topo).facet_rule(diag, 3);
            assert!((r.measure() - frac * len).abs() < 1e-15, "({va}, {vb})");
        }
    }

    #[test]
    fn ring_cut_count_matches_vertex_sign_scan() {
        let m = square(8);
        let ring = Ring::default();
        let topo = classify(&m, &ring).unwrap();
        let brute = m
            .triangles()
            .iter()
            .filter(|tri| {
                let s: Vec<f64> = tri.iter().map(|&v| ring.value(m.vertices()[v])).collect();
                s.iter().any(|&x| x > 0.0) && s.iter().any(|&x| x < 0.0)
            })
            .count();
        assert_eq!(topo.cut().len(), brute);
        assert!(topo.cut().len() > 0);
    }

    #[test]
    fn partition_of_cut_elements() {
        let m = square(16);
        let topo = classify(&m, &Ring::default()).unwrap();
        let cm = CutMesh::new(&m, &topo);
        for &t in topo.cut() {
            let inside = cm.volume_rule(t, 2).unwrap().measure();
            let outside = cm.outside_volume_rule(t, 2).measure();
            let area = m.area(t);
            assert!(((inside + outside) - area).abs() <= 1e-13 * area);
        }
    }

    #[test]
    fn normals_agree_with_level_set_gradient() {
        let m = square(32);
        let disc = Disc { centre: [0.0, 0.0], radius: 0.5 };
        let topo = classify(&m, &disc).unwrap();
        let cm = CutMesh::new(&m, &topo);
        for &t in topo.cut() {
            let rule = cm.boundary_rule(t, 2).unwrap();
            for (p, n) in rule.points.iter().zip(rule.normals.as_ref().unwrap()) {
                let g = disc.gradient(*p);
                assert!(n[0] * g[0] + n[1] * g[1] > 0.0);
            }
        }
    }
}
