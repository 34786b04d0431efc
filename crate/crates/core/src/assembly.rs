//! Assembly of the Nitsche/interior-penalty form, the direct ghost penalty and
//! the upwind convection form, and reduction by an embedding.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::basis::{eval_basis_into, BasisValues, DgSpace};
use crate::cutgeom::CutMesh;
use crate::embedding::EmbeddingMap;
use crate::error::{Error, Result};
use crate::linalg::{BlockSparseMatrix, DenseMatrix};
use crate::mesh::{dot, Point};

pub type ScalarField = dyn Fn(Point) -> f64 + Send + Sync;
pub type VectorField = dyn Fn(Point) -> Point + Send + Sync;

/// Scaling of the ghost-penalty term on a facet of size `h_F`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GhostScaling {
    Constant(f64),
    /// `γ₀ (α + h_F c_w)`.
    Convective { gamma0: f64, cw: f64 },
}

impl GhostScaling {
    pub fn at(&self, alpha: f64, h_f: f64) -> f64 {
        match *self {
            GhostScaling::Constant(g) => g,
            GhostScaling::Convective { gamma0, cw } => gamma0 * (alpha + h_f * cw),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stabilisation {
    /// Ghost penalty on every facet next to a cut element.
    Gp,
    /// Ghost penalty on the inner facets of aggregation patches.
    Wgp,
    /// Element aggregation; no penalty in the system matrix.
    Ag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    Dg,
    Trefftz,
}

macro_rules! string_enum {
    ($ty:ident { $($variant:ident => $name:literal),* $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $name),* }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)*
                    _ => Err(Error::invalid(format!(
                        concat!("unknown ", stringify!($ty), " '{}'"), s
                    ))),
                }
            }
        }
    };
}

string_enum!(Stabilisation { Gp => "gp", Wgp => "wgp", Ag => "agg" });
string_enum!(SpaceKind { Dg => "dg", Trefftz => "trefftz" });

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FormParams {
    pub k: usize,
    /// Nitsche and interior-penalty parameter.
    pub beta: f64,
    pub gamma: GhostScaling,
    /// Diffusion coefficient; multiplies the whole diffusive form.
    pub alpha: f64,
    /// Polynomial degree integrated exactly by the quadrature rules.
    pub quad_order: usize,
}

impl FormParams {
    /// `β = 10k²`, `γ = 0.01`, `α = 1`, quadrature order `2k + 2`.
    pub fn new(k: usize) -> Self {
        Self {
            k,
            beta: 10.0 * (k.max(1) * k.max(1)) as f64,
            gamma: GhostScaling::Constant(0.01),
            alpha: 1.0,
            quad_order: 2 * k + 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        let g = self.gamma.at(self.alpha, 1.0);
        if !(g >= 0.0) {
            return Err(Error::invalid(format!("gamma must be non-negative, got {g}")));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Condition on the boundary of the background rectangle; Neumann data are homogeneous.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
}

/// Right-hand side and boundary data of `−αΔu + w·∇u = f`.
pub struct ProblemData {
    pub source: Box<ScalarField>,
    /// Dirichlet values on `Γ_h` and on Dirichlet parts of the rectangle.
    pub dirichlet: Box<ScalarField>,
    /// Condition on the rectangle's boundary, evaluated at facet midpoints.
    pub outer_boundary: Box<dyn Fn(Point) -> BoundaryCondition + Send + Sync>,
    pub velocity: Option<Box<VectorField>>,
}

impl ProblemData {
    /// Poisson problem with Dirichlet data everywhere.
    pub fn poisson(
        source: impl Fn(Point) -> f64 + Send + Sync + 'static,
        dirichlet: impl Fn(Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            source: Box::new(source),
            dirichlet: Box::new(dirichlet),
            outer_boundary: Box::new(|_| BoundaryCondition::Dirichlet),
            velocity: None,
        }
    }
}

/// Global matrix on the DG element blocks and the load vector.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: BlockSparseMatrix,
    pub rhs: Vec<f64>,
}

impl SparseSystem {
    pub fn zeros(space: &DgSpace) -> Self {
        Self {
            matrix: BlockSparseMatrix::new(&space.block_sizes()),
            rhs: vec![0.0; space.ndofs()],
        }
    }

    pub fn add_matrix(&mut self, other: &BlockSparseMatrix) {
        for i in 0..other.num_blocks() {
            for (j, m) in other.block_row(i) {
                self.matrix.add_block(i, j, m);
            }
        }
    }

    pub fn add(&mut self, other: &SparseSystem) {
        self.add_matrix(&other.matrix);
        for (a, b) in self.rhs.iter_mut().zip(&other.rhs) {
            *a += b;
        }
    }
}

/// Contributions of one element or facet, scattered serially afterwards.
#[derive(Default)]
struct Local {
    blocks: Vec<(usize, usize, DenseMatrix)>,
    rhs: Vec<(usize, Vec<f64>)>,
}

fn scatter(space: &DgSpace, locals: Vec<Local>) -> SparseSystem {
    let mut sys = SparseSystem::zeros(space);
    for local in locals {
        for (i, j, m) in &local.blocks {
            sys.matrix.add_block(*i, *j, m);
        }
        for (i, v) in local.rhs {
            for (dst, x) in sys.rhs[space.dof_range(i)].iter_mut().zip(v) {
                *dst += x;
            }
        }
    }
    sys
}

fn active(cut: &CutMesh<'_>, t: usize) -> Result<usize> {
    cut.topology
        .active_index(t)
        .ok_or_else(|| Error::invalid(format!("element {t} is not active")))
}

/// Symmetric Nitsche terms on a boundary piece with outward normal `n` and
/// penalty length `h`, for a single element.
#[allow(clippy::too_many_arguments)]
fn nitsche_boundary(
    space: &DgSpace,
    a: usize,
    points: &[Point],
    weights: &[f64],
    normals: &[Point],
    h: f64,
    params: &FormParams,
    g: &ScalarField,
    m: &mut DenseMatrix,
    rhs: &mut [f64],
) {
    let n = space.local_dim();
    let mut phi = BasisValues::default();
    let pen = params.beta / h;
    for ((&x, &w), &nrm) in points.iter().zip(weights).zip(normals) {
        eval_basis_into(space.frame(a), space.k, x, &mut phi);
        let dn: Vec<f64> = phi.gradients.iter().map(|&gr| dot(gr, nrm)).collect();
        let wa = w * params.alpha;
        let gx = g(x);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += wa * (-dn[j] * phi.values[i] - phi.values[j] * dn[i] + pen * (phi.values[i] * phi.values[j]));
            }
            rhs[i] += wa * gx * (-dn[i] + pen * phi.values[i]);
        }
    }
}

/// `𝒜_h` and `ℒ_h`: diffusion on `Ω_h`, Nitsche terms on `Γ_h` (penalty
/// length `h_T`) and on Dirichlet parts of the rectangle (`h_F`), and
/// symmetric interior penalty on `ℱ_h ∩ Ω_h` (`h_F`).
pub fn assemble_a(cut: &CutMesh<'_>, space: &DgSpace, params: &FormParams, data: &ProblemData) -> Result<SparseSystem> {
    params.validate()?;
    let n = space.local_dim();
    let k = space.k;
    let order = params.quad_order;
    let mesh = cut.mesh;

    let elements = (0..space.num_elements())
        .into_par_iter()
        .map(|a| -> Result<Local> {
            let t = space.element(a);
            let rule = cut.volume_rule(t, order)?;
            if rule.is_empty() {
                return Err(Error::Internal(format!("cut element {t} has an empty volume rule")));
            }
            let mut m = DenseMatrix::zeros(n, n);
            let mut rhs = vec![0.0; n];
            let mut phi = BasisValues::default();
            for (&x, &w) in rule.points.iter().zip(&rule.weights) {
                eval_basis_into(space.frame(a), k, x, &mut phi);
                let f = (data.source)(x);
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] += w * params.alpha * dot(phi.gradients[i], phi.gradients[j]);
                    }
                    rhs[i] += w * f * phi.values[i];
                }
            }
            let b = cut.boundary_rule(t, order)?;
            if !b.is_empty() {
                let normals = b.normals.as_deref().expect("boundary rule carries normals");
                nitsche_boundary(space, a, &b.points, &b.weights, normals, mesh.diameter(t), params, &*data.dirichlet, &mut m, &mut rhs);
            }
            Ok(Local {
                blocks: vec![(a, a, m)],
                rhs: vec![(a, rhs)],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let outer = cut
        .topology
        .boundary_facets()
        .par_iter()
        .map(|&f| -> Result<Local> {
            let facet = &mesh.facets()[f];
            let (pa, pb) = (mesh.vertices()[facet.vertices[0]], mesh.vertices()[facet.vertices[1]]);
            let mid = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
            let rule = cut.facet_rule(f, order);
            if rule.is_empty() || (data.outer_boundary)(mid) == BoundaryCondition::Neumann {
                return Ok(Local::default());
            }
            let a = active(cut, facet.elements.0)?;
            let mut m = DenseMatrix::zeros(n, n);
            let mut rhs = vec![0.0; n];
            let normals = vec![facet.normal; rule.len()];
            nitsche_boundary(space, a, &rule.points, &rule.weights, &normals, facet.length, params, &*data.dirichlet, &mut m, &mut rhs);
            Ok(Local {
                blocks: vec![(a, a, m)],
                rhs: vec![(a, rhs)],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let interior = cut
        .topology
        .interior_facets()
        .par_iter()
        .map(|&f| -> Result<Local> {
            let facet = &mesh.facets()[f];
            let rule = cut.facet_rule(f, order);
            if rule.is_empty() {
                return Ok(Local::default());
            }
            let ids = [
                active(cut, facet.elements.0)?,
                active(cut, facet.elements.1.expect("interior facet"))?,
            ];
            let sign = [1.0, -1.0];
            let nrm = facet.normal;
            let pen = params.beta / facet.length;
            let mut blocks = [[DenseMatrix::zeros(n, n), DenseMatrix::zeros(n, n)], [DenseMatrix::zeros(n, n), DenseMatrix::zeros(n, n)]];
            let mut phi = [BasisValues::default(), BasisValues::default()];
            let mut dn = [vec![0.0; n], vec![0.0; n]];
            for (&x, &w) in rule.points.iter().zip(&rule.weights) {
                for s in 0..2 {
                    eval_basis_into(space.frame(ids[s]), k, x, &mut phi[s]);
                    for i in 0..n {
                        dn[s][i] = dot(phi[s].gradients[i], nrm);
                    }
                }
                let wa = w * params.alpha;
                for s in 0..2 {
                    for t in 0..2 {
                        let blk = &mut blocks[s][t];
                        let (vs, vt) = (&phi[s].values, &phi[t].values);
                        for i in 0..n {
                            for j in 0..n {
                                blk[(i, j)] += wa
                                    * (-0.5 * sign[s] * vs[i] * dn[t][j] - 0.5 * sign[t] * vt[j] * dn[s][i]
                                        + pen * sign[s] * sign[t] * (vs[i] * vt[j]));
                            }
                        }
                    }
                }
            }
            let mut out = Local::default();
            for (s, row) in blocks.into_iter().enumerate() {
                for (t, blk) in row.into_iter().enumerate() {
                    out.blocks.push((ids[s], ids[t], blk));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(scatter(space, elements.into_iter().chain(outer).chain(interior).collect()))
}

/// Direct ghost penalty `Σ_F γ_F h_F^{-2} ∫_{ω_F} [u][v]` with the patch jump
/// `[u] = u_1 − u_2` of the canonically extended element polynomials, over
/// the full facet patch `ω_F = T_1 ∪ T_2`.
pub fn assemble_s(cut: &CutMesh<'_>, space: &DgSpace, params: &FormParams, facets: &[usize]) -> Result<BlockSparseMatrix> {
    let n = space.local_dim();
    let k = space.k;
    let mesh = cut.mesh;
    let order = 2 * k;
    let locals = facets
        .par_iter()
        .map(|&f| -> Result<Local> {
            let facet = &mesh.facets()[f];
            let (t1, t2) = match facet.elements {
                (t1, Some(t2)) if cut.topology.is_active(t1) && cut.topology.is_active(t2) => (t1, t2),
                _ => {
                    return Err(Error::invalid(format!(
                        "ghost-penalty facet {f} does not have two active neighbours"
                    )))
                }
            };
            let ids = [active(cut, t1)?, active(cut, t2)?];
            let scale = params.gamma.at(params.alpha, facet.length) / (facet.length * facet.length);
            let sign = [1.0, -1.0];
            let mut blocks = [[DenseMatrix::zeros(n, n), DenseMatrix::zeros(n, n)], [DenseMatrix::zeros(n, n), DenseMatrix::zeros(n, n)]];
            let mut phi = [BasisValues::default(), BasisValues::default()];
            for t in [t1, t2] {
                let rule = cut.full_rule(t, order);
                for (&x, &w) in rule.points.iter().zip(&rule.weights) {
                    for s in 0..2 {
                        eval_basis_into(space.frame(ids[s]), k, x, &mut phi[s]);
                    }
                    for s in 0..2 {
                        for r in 0..2 {
                            let c = w * scale * sign[s] * sign[r];
                            let blk = &mut blocks[s][r];
                            for i in 0..n {
                                for j in 0..n {
                                    blk[(i, j)] += c * (phi[s].values[i] * phi[r].values[j]);
                                }
                            }
                        }
                    }
                }
            }
            let mut out = Local::default();
            for (s, row) in blocks.into_iter().enumerate() {
                for (r, blk) in row.into_iter().enumerate() {
                    out.blocks.push((ids[s], ids[r], blk));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(scatter(space, locals).matrix)
}

/// Upwind form `Σ_T −(u, w·∇v)_{T∩Ω_h} + (ŵ_n u, v)_{∂(T∩Ω_h)}` with the
/// upwind trace on interior facets and outflow boundaries and `ŵ_n u = 0` on
/// inflow boundaries; Dirichlet data enter through the Nitsche terms only.
pub fn assemble_w_upwind(cut: &CutMesh<'_>, space: &DgSpace, params: &FormParams, data: &ProblemData) -> Result<SparseSystem> {
    let Some(velocity) = data.velocity.as_deref() else {
        return Ok(SparseSystem::zeros(space));
    };
    let n = space.local_dim();
    let k = space.k;
    let order = params.quad_order;
    let mesh = cut.mesh;

    // Outflow part of a boundary piece of a single element.
    let boundary = |a: usize, points: &[Point], weights: &[f64], normals: &[Point], m: &mut DenseMatrix| {
        let mut phi = BasisValues::default();
        for ((&x, &w), &nrm) in points.iter().zip(weights).zip(normals) {
            let wn = dot(velocity(x), nrm);
            if wn > 0.0 {
                eval_basis_into(space.frame(a), k, x, &mut phi);
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] += w * wn * (phi.values[i] * phi.values[j]);
                    }
                }
            }
        }
    };

    let elements = (0..space.num_elements())
        .into_par_iter()
        .map(|a| -> Result<Local> {
            let t = space.element(a);
            let rule = cut.volume_rule(t, order)?;
            let mut m = DenseMatrix::zeros(n, n);
            let mut phi = BasisValues::default();
            for (&x, &w) in rule.points.iter().zip(&rule.weights) {
                eval_basis_into(space.frame(a), k, x, &mut phi);
                let v = velocity(x);
                for i in 0..n {
                    let adv = dot(v, phi.gradients[i]);
                    for j in 0..n {
                        m[(i, j)] -= w * phi.values[j] * adv;
                    }
                }
            }
            let b = cut.boundary_rule(t, order)?;
            if !b.is_empty() {
                let normals = b.normals.as_deref().expect("boundary rule carries normals");
                boundary(a, &b.points, &b.weights, normals, &mut m);
            }
            Ok(Local {
                blocks: vec![(a, a, m)],
                rhs: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let outer = cut
        .topology
        .boundary_facets()
        .par_iter()
        .map(|&f| -> Result<Local> {
            let facet = &mesh.facets()[f];
            let rule = cut.facet_rule(f, order);
            if rule.is_empty() {
                return Ok(Local::default());
            }
            let a = active(cut, facet.elements.0)?;
            let mut m = DenseMatrix::zeros(n, n);
            let normals = vec![facet.normal; rule.len()];
            boundary(a, &rule.points, &rule.weights, &normals, &mut m);
            Ok(Local {
                blocks: vec![(a, a, m)],
                rhs: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let interior = cut
        .topology
        .interior_facets()
        .par_iter()
        .map(|&f| -> Result<Local> {
            let facet = &mesh.facets()[f];
            let rule = cut.facet_rule(f, order);
            if rule.is_empty() {
                return Ok(Local::default());
            }
            let ids = [
                active(cut, facet.elements.0)?,
                active(cut, facet.elements.1.expect("interior facet"))?,
            ];
            let sign = [1.0, -1.0];
            let mut blocks = [[DenseMatrix::zeros(n, n), DenseMatrix::zeros(n, n)], [DenseMatrix::zeros(n, n), DenseMatrix::zeros(n, n)]];
            let mut phi = [BasisValues::default(), BasisValues::default()];
            for (&x, &w) in rule.points.iter().zip(&rule.weights) {
                let wn = dot(velocity(x), facet.normal);
                let up = if wn >= 0.0 { 0 } else { 1 };
                for s in 0..2 {
                    eval_basis_into(space.frame(ids[s]), k, x, &mut phi[s]);
                }
                for s in 0..2 {
                    let blk = &mut blocks[s][up];
                    for i in 0..n {
                        for j in 0..n {
                            blk[(i, j)] += w * wn * sign[s] * phi[s].values[i] * phi[up].values[j];
                        }
                    }
                }
            }
            let mut out = Local::default();
            for (s, row) in blocks.into_iter().enumerate() {
                for (t, blk) in row.into_iter().enumerate() {
                    out.blocks.push((ids[s], ids[t], blk));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(scatter(space, elements.into_iter().chain(outer).chain(interior).collect()))
}

/// `TᵀBT`, assembled block by block on the embedding's block partition.
pub fn reduce(matrix: &BlockSparseMatrix, embedding: &EmbeddingMap) -> Result<BlockSparseMatrix> {
    if matrix.dim() != embedding.ndofs() {
        return Err(Error::DimensionMismatch {
            expected: embedding.ndofs(),
            found: matrix.dim(),
        });
    }
    let nloc = embedding.local_dim();
    if (0..matrix.num_blocks()).any(|b| matrix.block_size(b) != nloc) {
        return Err(Error::invalid("system blocks do not match the element dof layout"));
    }
    let rows: Vec<DenseMatrix> = (0..matrix.num_blocks()).into_par_iter().map(|a| embedding.element_rows(a)).collect();
    let reduced_rows = embedding
        .blocks()
        .par_iter()
        .map(|block| {
            let mut acc: BTreeMap<usize, DenseMatrix> = BTreeMap::new();
            for &a in &block.elements {
                for (a2, b) in matrix.block_row(a) {
                    let c = embedding.block_of(a2).0;
                    let contrib = rows[a].tr_matmul(&b.matmul(&rows[a2]));
                    match acc.get_mut(&c) {
                        Some(m) => m.add_assign(&contrib),
                        None => {
                            acc.insert(c, contrib);
                        }
                    }
                }
            }
            acc
        })
        .collect::<Vec<_>>();
    let sizes: Vec<usize> = embedding.blocks().iter().map(|b| b.ncols()).collect();
    let mut out = BlockSparseMatrix::new(&sizes);
    for (r, row) in reduced_rows.into_iter().enumerate() {
        for (c, m) in row {
            out.add_block(r, c, &m);
        }
    }
    Ok(out)
}

/// `Tᵀ(l − B u_f)`.
pub fn homogenize_rhs(matrix: &BlockSparseMatrix, rhs: &[f64], embedding: &EmbeddingMap, u_f: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != embedding.ndofs() || u_f.len() != embedding.ndofs() {
        return Err(Error::DimensionMismatch {
            expected: embedding.ndofs(),
            found: rhs.len().max(u_f.len()),
        });
    }
    let bu = matrix.matvec(u_f);
    let r: Vec<f64> = rhs.iter().zip(&bu).map(|(l, b)| l - b).collect();
    Ok(embedding.apply_transpose(&r))
}
