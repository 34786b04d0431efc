//! Aggregation patches connecting every cut element to an interior root, and
//! the ghost-penalty facet sets derived from them.

use std::collections::VecDeque;
use std::io::Write;

use crate::cutgeom::{CutMesh, ElementClass};
use crate::error::{Error, Result};
use crate::mesh::{dist, BackgroundMesh, Point};

/// Relative threshold on `|F ∩ Ω_h| / h_F` for a facet to connect two elements.
pub const CONNECTING_FACET_TOL: f64 = 1e-12;

/// One patch: an interior root element and the cut elements attached to it.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub root: usize,
    /// Member elements in ascending order, root included.
    pub members: Vec<usize>,
    /// Facets shared by two members.
    pub inner_facets: Vec<usize>,
}

impl Patch {
    pub fn is_trivial(&self) -> bool {
        self.members.len() == 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchDecomposition {
    patches: Vec<Patch>,
    patch_of: Vec<Option<usize>>,
    depth: Vec<usize>,
    max_depth: usize,
    gp_star: Vec<usize>,
    gp_min: Vec<usize>,
}

impl PatchDecomposition {
    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    /// Patch containing element `t`, if `t` is active.
    pub fn patch_of(&self, t: usize) -> Option<usize> {
        self.patch_of[t]
    }

    /// Path length from `t` to its root through the patch.
    pub fn depth(&self, t: usize) -> usize {
        self.depth[t]
    }

    /// `n_max`, the longest element path from a member to its root.
    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Facets between an active element and a cut element.
    pub fn gp_star(&self) -> &[usize] {
        &self.gp_star
    }

    /// Union of the inner facets of all non-trivial patches.
    pub fn gp_min(&self) -> &[usize] {
        &self.gp_min
    }

    /// `element_id,patch_id,root_id,class` for every active element.
    pub fn write_csv<W: Write>(&self, cut: &CutMesh<'_>, mut out: W) -> std::io::Result<()> {
        writeln!(out, "element_id,patch_id,root_id,class")?;
        for &t in cut.topology.active() {
            let p = self.patch_of[t].expect("active element without patch");
            writeln!(
                out,
                "{t},{p},{},{}",
                self.patches[p].root,
                cut.topology.class(t).as_str()
            )?;
        }
        Ok(())
    }
}

/// Multi-source breadth-first search from all interior elements across
/// facets with positive cut measure. Each cut element joins the patch of the
/// root that reaches it first; ties go to the lower element index.
pub fn build_patches(cut: &CutMesh<'_>) -> Result<PatchDecomposition> {
    let mesh = cut.mesh;
    let topo = cut.topology;
    let ne = mesh.num_elements();
    let mut owner: Vec<Option<usize>> = vec![None; ne];
    let mut depth = vec![0usize; ne];
    let mut queue = VecDeque::new();
    let mut roots = Vec::new();
    for &t in topo.active() {
        if topo.class(t) == ElementClass::Inside {
            owner[t] = Some(roots.len());
            roots.push(t);
            queue.push_back(t);
        }
    }
    while let Some(t) = queue.pop_front() {
        let mut next: Vec<(usize, usize)> = mesh.neighbours(t).collect();
        next.sort_by_key(|&(_, n)| n);
        for (f, n) in next {
            if owner[n].is_some() || topo.class(n) != ElementClass::Cut {
                continue;
            }
            if cut.facet_measure(f) <= CONNECTING_FACET_TOL * mesh.facets()[f].length {
                continue;
            }
            owner[n] = owner[t];
            depth[n] = depth[t] + 1;
            queue.push_back(n);
        }
    }
    if let Some(&t) = topo.cut().iter().find(|&&t| owner[t].is_none()) {
        return Err(Error::UnstabilisableGeometry { element: t });
    }

    let mut patches: Vec<Patch> = roots
        .iter()
        .map(|&root| Patch {
            root,
            members: Vec::new(),
            inner_facets: Vec::new(),
        })
        .collect();
    for &t in topo.active() {
        patches[owner[t].unwrap()].members.push(t);
    }
    let mut gp_star = Vec::new();
    let mut gp_min = Vec::new();
    for &f in topo.interior_facets() {
        let (a, b) = mesh.facets()[f].elements;
        let b = b.expect("interior facet without second element");
        if topo.class(a) == ElementClass::Cut || topo.class(b) == ElementClass::Cut {
            gp_star.push(f);
        }
        if owner[a] == owner[b] {
            patches[owner[a].unwrap()].inner_facets.push(f);
            gp_min.push(f);
        }
    }
    let max_depth = topo.active().iter().map(|&t| depth[t]).max().unwrap_or(0);
    let patch_of = owner;
    Ok(PatchDecomposition {
        patches,
        patch_of,
        depth,
        max_depth,
        gp_star,
        gp_min,
    })
}

/// `(F_gp^⋆, F_gp^min)`.
pub fn facet_sets(patches: &PatchDecomposition) -> (Vec<usize>, Vec<usize>) {
    (patches.gp_star.clone(), patches.gp_min.clone())
}

/// The union of one patch's elements, seen as a single element.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregatedElement {
    pub root: usize,
    pub members: Vec<usize>,
    pub centroid: Point,
    /// `h_ω`, the largest vertex-to-vertex distance in the aggregate.
    pub diameter: f64,
}

pub fn aggregate_mesh(mesh: &BackgroundMesh, patches: &PatchDecomposition) -> Vec<AggregatedElement> {
    patches
        .patches
        .iter()
        .map(|p| {
            let mut area = 0.0;
            let mut centroid = [0.0, 0.0];
            let mut points = Vec::with_capacity(3 * p.members.len());
            for &t in &p.members {
                let a = mesh.area(t);
                let c = mesh.centroid(t);
                area += a;
                centroid[0] += a * c[0];
                centroid[1] += a * c[1];
                points.extend(mesh.element_vertices(t));
            }
            let mut diameter: f64 = 0.0;
            for (i, &x) in points.iter().enumerate() {
                for &y in &points[i + 1..] {
                    diameter = diameter.max(dist(x, y));
                }
            }
            AggregatedElement {
                root: p.root,
                members: p.members.clone(),
                centroid: [centroid[0] / area, centroid[1] / area],
                diameter,
            }
        })
        .collect()
}
