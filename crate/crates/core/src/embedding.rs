//! Block-diagonal orthonormal embeddings `T` of reduced spaces (Trefftz,
//! aggregated, aggregated Trefftz, weak Trefftz) into the DG coefficient space,
//! and element-wise particular solutions.

use rayon::prelude::*;

use crate::basis::{dim, eval, eval_basis, eval_basis_into, laplacian_coeff_matrix, BasisValues, DgSpace, Frame};
use crate::cutgeom::CutMesh;
use crate::error::{Error, Result};
use crate::linalg::{svd, DenseMatrix, RANK_TOLERANCE};
use crate::mesh::Point;
use crate::patches::PatchDecomposition;
use crate::quadrature::QuadratureRule;

/// Where element-local constraint integrals are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ConstraintDomain {
    /// The whole background triangle `T`.
    #[default]
    FullElement,
    /// Only the physical part `T ∩ Ω_h`.
    CutElement,
}

/// One diagonal block of `T`: the DG dofs of `elements` (active indices, in
/// this order) are spanned by the orthonormal columns of `matrix`.
#[derive(Clone, Debug)]
pub struct EmbeddingBlock {
    pub elements: Vec<usize>,
    pub matrix: DenseMatrix,
    pub col_offset: usize,
}

impl EmbeddingBlock {
    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn col_range(&self) -> std::ops::Range<usize> {
        self.col_offset..self.col_offset + self.ncols()
    }
}

/// Block-diagonal map from `M` reduced coefficients to `N` DG coefficients.
#[derive(Clone, Debug)]
pub struct EmbeddingMap {
    local_dim: usize,
    ndofs: usize,
    reduced_dim: usize,
    blocks: Vec<EmbeddingBlock>,
    block_of: Vec<(usize, usize)>,
}

impl EmbeddingMap {
    /// Assemble a map from per-block element lists and column bases.
    pub fn from_blocks(space: &DgSpace, parts: Vec<(Vec<usize>, DenseMatrix)>) -> Result<Self> {
        let nloc = space.local_dim();
        let mut block_of = vec![(usize::MAX, 0); space.num_elements()];
        let mut blocks = Vec::with_capacity(parts.len());
        let mut offset = 0;
        for (b, (elements, matrix)) in parts.into_iter().enumerate() {
            if matrix.nrows() != elements.len() * nloc {
                return Err(Error::DimensionMismatch {
                    expected: elements.len() * nloc,
                    found: matrix.nrows(),
                });
            }
            for (pos, &a) in elements.iter().enumerate() {
                if a >= block_of.len() || block_of[a].0 != usize::MAX {
                    return Err(Error::invalid(format!("element {a} is not covered exactly once")));
                }
                block_of[a] = (b, pos);
            }
            let cols = matrix.ncols();
            blocks.push(EmbeddingBlock {
                elements,
                matrix,
                col_offset: offset,
            });
            offset += cols;
        }
        if let Some(a) = block_of.iter().position(|&(b, _)| b == usize::MAX) {
            return Err(Error::invalid(format!("element {a} is not covered by the embedding")));
        }
        Ok(Self {
            local_dim: nloc,
            ndofs: space.ndofs(),
            reduced_dim: offset,
            blocks,
            block_of,
        })
    }

    pub fn identity(space: &DgSpace) -> Self {
        let n = space.local_dim();
        let parts = (0..space.num_elements())
            .map(|a| (vec![a], DenseMatrix::identity(n)))
            .collect();
        Self::from_blocks(space, parts).expect("identity blocks are consistent")
    }

    pub fn blocks(&self) -> &[EmbeddingBlock] {
        &self.blocks
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    /// `N`.
    pub fn ndofs(&self) -> usize {
        self.ndofs
    }

    /// `M`.
    pub fn reduced_dim(&self) -> usize {
        self.reduced_dim
    }

    /// Block index and position within the block of active element `a`.
    pub fn block_of(&self, a: usize) -> (usize, usize) {
        self.block_of[a]
    }

    /// Rows of `T` belonging to active element `a`: `N_T × cols(T_b)`.
    pub fn element_rows(&self, a: usize) -> DenseMatrix {
        let (b, pos) = self.block_of[a];
        self.blocks[b]
            .matrix
            .rows_range(pos * self.local_dim..(pos + 1) * self.local_dim)
    }

    /// `T x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.reduced_dim);
        let n = self.local_dim;
        let mut out = vec![0.0; self.ndofs];
        for block in &self.blocks {
            let local = block.matrix.matvec(&x[block.col_range()]);
            for (pos, &a) in block.elements.iter().enumerate() {
                out[a * n..(a + 1) * n].copy_from_slice(&local[pos * n..(pos + 1) * n]);
            }
        }
        out
    }

    /// `Tᵀ v`.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.ndofs);
        let n = self.local_dim;
        let mut out = vec![0.0; self.reduced_dim];
        for block in &self.blocks {
            let mut local = Vec::with_capacity(block.matrix.nrows());
            for &a in &block.elements {
                local.extend_from_slice(&v[a * n..(a + 1) * n]);
            }
            out[block.col_range()].copy_from_slice(&block.matrix.tr_matvec(&local));
        }
        out
    }

    /// Dense `N × M` matrix; for tests and small diagnostics only.
    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.local_dim;
        let mut t = DenseMatrix::zeros(self.ndofs, self.reduced_dim);
        for block in &self.blocks {
            for (pos, &a) in block.elements.iter().enumerate() {
                for i in 0..n {
                    for j in 0..block.ncols() {
                        t[(a * n + i, block.col_offset + j)] = block.matrix[(pos * n + i, j)];
                    }
                }
            }
        }
        t
    }
}

/// Orthonormal basis of the numerical kernel of `c` (`n` columns). An empty
/// or all-zero constraint has the full space as kernel.
pub fn kernel_basis(c: &DenseMatrix) -> Result<DenseMatrix> {
    let n = c.ncols();
    if c.nrows() == 0 || c.max_abs() == 0.0 {
        return Ok(DenseMatrix::identity(n));
    }
    Ok(svd(c)?.null_space(RANK_TOLERANCE))
}

/// `C_T` for active element `a`.
pub fn trefftz_constraint(space: &DgSpace, a: usize) -> DenseMatrix {
    laplacian_coeff_matrix(space.frame(a).h, space.k)
}

/// One block per active element spanning the harmonic polynomials.
pub fn trefftz_embedding(space: &DgSpace) -> Result<EmbeddingMap> {
    let k = space.k;
    let expected = trefftz_dim(k);
    let parts = (0..space.num_elements())
        .into_par_iter()
        .map(|a| {
            let t = kernel_basis(&trefftz_constraint(space, a))?;
            if t.ncols() != expected {
                return Err(Error::DegenerateOperator {
                    element: space.element(a),
                    expected,
                    found: t.ncols(),
                });
            }
            Ok((vec![a], t))
        })
        .collect::<Result<Vec<_>>>()?;
    EmbeddingMap::from_blocks(space, parts)
}

/// Dimension of the harmonic polynomials of degree `k` in 2D.
pub fn trefftz_dim(k: usize) -> usize {
    dim(k as isize) - dim(k as isize - 2)
}

/// Rectangular root `R` of the patch-local direct ghost-penalty Gram matrix,
/// `RᵀR = Σ_F h_F^{-2} ∫_{ω_F} [u][v]`, over the inner facets of patch `p`.
/// Columns follow the patch members in ascending order.
pub fn patch_jump_factor(cut: &CutMesh<'_>, space: &DgSpace, patches: &PatchDecomposition, p: usize) -> DenseMatrix {
    let patch = &patches.patches()[p];
    let members: Vec<usize> = patch
        .members
        .iter()
        .map(|&t| cut.topology.active_index(t).expect("patch member is active"))
        .collect();
    let pos_of = |t: usize| patch.members.binary_search(&t).expect("facet element in patch");
    let k = space.k;
    let n = space.local_dim();
    let order = 2 * k;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut buf_i = BasisValues::default();
    let mut buf_j = BasisValues::default();
    for &f in &patch.inner_facets {
        let facet = &cut.mesh.facets()[f];
        let (t1, t2) = (facet.elements.0, facet.elements.1.expect("inner facet is interior"));
        let (p1, p2) = (pos_of(t1), pos_of(t2));
        let (a1, a2) = (members[p1], members[p2]);
        let scale = 1.0 / facet.length;
        for t in [t1, t2] {
            let rule = cut.full_rule(t, order);
            for (&x, &w) in rule.points.iter().zip(&rule.weights) {
                eval_basis_into(space.frame(a1), k, x, &mut buf_i);
                eval_basis_into(space.frame(a2), k, x, &mut buf_j);
                let s = w.sqrt() * scale;
                let mut row = vec![0.0; members.len() * n];
                for l in 0..n {
                    row[p1 * n + l] = s * buf_i.values[l];
                    row[p2 * n + l] = -s * buf_j.values[l];
                }
                rows.push(row);
            }
        }
    }
    let mut r = DenseMatrix::zeros(rows.len(), members.len() * n);
    for (i, row) in rows.iter().enumerate() {
        r.row_mut(i).copy_from_slice(row);
    }
    r
}

fn patch_elements(cut: &CutMesh<'_>, patches: &PatchDecomposition, p: usize) -> Vec<usize> {
    patches.patches()[p]
        .members
        .iter()
        .map(|&t| cut.topology.active_index(t).expect("patch member is active"))
        .collect()
}

/// One block per patch spanning a single polynomial on the aggregate: the
/// kernel of the patch-local ghost penalty.
pub fn aggregation_embedding(
    cut: &CutMesh<'_>,
    space: &DgSpace,
    patches: &PatchDecomposition,
) -> Result<EmbeddingMap> {
    let expected = space.local_dim();
    let parts = (0..patches.num_patches())
        .into_par_iter()
        .map(|p| {
            let elements = patch_elements(cut, patches, p);
            let t = if elements.len() == 1 {
                DenseMatrix::identity(expected)
            } else {
                kernel_basis(&patch_jump_factor(cut, space, patches, p))?
            };
            if t.ncols() != expected {
                return Err(Error::InconsistentStabilisation {
                    block: p,
                    expected,
                    found: t.ncols(),
                });
            }
            Ok((elements, t))
        })
        .collect::<Result<Vec<_>>>()?;
    EmbeddingMap::from_blocks(space, parts)
}

/// Stacked constraint `[R/‖R‖; diag(C_T)/‖C‖]` of the aggregated Trefftz space.
pub fn aggregated_trefftz_constraint(
    cut: &CutMesh<'_>,
    space: &DgSpace,
    patches: &PatchDecomposition,
    p: usize,
) -> DenseMatrix {
    let elements = patch_elements(cut, patches, p);
    let n = space.local_dim();
    let l = dim(space.k as isize - 2);
    let mut r = if elements.len() > 1 {
        patch_jump_factor(cut, space, patches, p)
    } else {
        DenseMatrix::zeros(0, n)
    };
    let mut c = DenseMatrix::zeros(l * elements.len(), n * elements.len());
    for (pos, &a) in elements.iter().enumerate() {
        let ct = trefftz_constraint(space, a);
        for i in 0..l {
            for j in 0..n {
                c[(pos * l + i, pos * n + j)] = ct[(i, j)];
            }
        }
    }
    for m in [&mut r, &mut c] {
        let s = m.frobenius_norm();
        if s > 0.0 {
            m.scale(1.0 / s);
        }
    }
    DenseMatrix::vstack(&[&r, &c])
}

/// One block per patch spanning one harmonic polynomial on the aggregate.
pub fn aggregated_trefftz_embedding(
    cut: &CutMesh<'_>,
    space: &DgSpace,
    patches: &PatchDecomposition,
) -> Result<EmbeddingMap> {
    let expected = trefftz_dim(space.k);
    let parts = (0..patches.num_patches())
        .into_par_iter()
        .map(|p| {
            let elements = patch_elements(cut, patches, p);
            let t = kernel_basis(&aggregated_trefftz_constraint(cut, space, patches, p))?;
            if t.ncols() != expected {
                return Err(Error::InconsistentStabilisation {
                    block: p,
                    expected,
                    found: t.ncols(),
                });
            }
            Ok((elements, t))
        })
        .collect::<Result<Vec<_>>>()?;
    EmbeddingMap::from_blocks(space, parts)
}

fn constraint_rule(cut: &CutMesh<'_>, space: &DgSpace, a: usize, order: usize, domain: ConstraintDomain) -> Result<QuadratureRule> {
    let t = space.element(a);
    match domain {
        ConstraintDomain::FullElement => Ok(cut.full_rule(t, order)),
        ConstraintDomain::CutElement => cut.volume_rule(t, order),
    }
}

/// Rows `∫ ψ_r (−αΔφ_j + w·∇φ_j)` with `ψ_r` the degree `k−2` scaled monomials.
pub fn weak_trefftz_constraint(
    cut: &CutMesh<'_>,
    space: &DgSpace,
    a: usize,
    alpha: f64,
    velocity: &(dyn Fn(Point) -> Point + Sync),
    domain: ConstraintDomain,
) -> Result<DenseMatrix> {
    let k = space.k;
    let n = space.local_dim();
    let l = dim(k as isize - 2);
    let mut c = DenseMatrix::zeros(l, n);
    if l == 0 {
        return Ok(c);
    }
    let frame = space.frame(a);
    let rule = constraint_rule(cut, space, a, 2 * k + 2, domain)?;
    let mut phi = BasisValues::default();
    for (&x, &w) in rule.points.iter().zip(&rule.weights) {
        eval_basis_into(frame, k, x, &mut phi);
        let psi = eval_basis(frame, k - 2, x).values;
        let v = velocity(x);
        for j in 0..n {
            let op = -alpha * phi.laplacians[j] + v[0] * phi.gradients[j][0] + v[1] * phi.gradients[j][1];
            for (r, &ps) in psi.iter().enumerate() {
                c[(r, j)] += w * ps * op;
            }
        }
    }
    Ok(c)
}

/// Per-element kernel of the projected convection–diffusion operator.
pub fn weak_trefftz_embedding(
    cut: &CutMesh<'_>,
    space: &DgSpace,
    alpha: f64,
    velocity: &(dyn Fn(Point) -> Point + Sync),
    domain: ConstraintDomain,
) -> Result<EmbeddingMap> {
    let expected = trefftz_dim(space.k);
    let parts = (0..space.num_elements())
        .into_par_iter()
        .map(|a| {
            let c = weak_trefftz_constraint(cut, space, a, alpha, velocity, domain)?;
            let t = kernel_basis(&c)?;
            if t.ncols() != expected {
                return Err(Error::DegenerateOperator {
                    element: space.element(a),
                    expected,
                    found: t.ncols(),
                });
            }
            Ok((vec![a], t))
        })
        .collect::<Result<Vec<_>>>()?;
    EmbeddingMap::from_blocks(space, parts)
}

/// Element-wise `u_f = W_T⁺ b_T` with `W_T` the weak Trefftz constraint and
/// `b_T = (∫ ψ_r f)_r`, so that `−αΔu_f + w·∇u_f − f ⟂ ℙ^{k−2}(T)`.
pub fn weak_particular_solution(
    cut: &CutMesh<'_>,
    space: &DgSpace,
    alpha: f64,
    velocity: &(dyn Fn(Point) -> Point + Sync),
    source: &(dyn Fn(Point) -> f64 + Sync),
    domain: ConstraintDomain,
) -> Result<Vec<f64>> {
    let k = space.k;
    let n = space.local_dim();
    let l = dim(k as isize - 2);
    let locals = (0..space.num_elements())
        .into_par_iter()
        .map(|a| -> Result<Vec<f64>> {
            let rule = constraint_rule(cut, space, a, 2 * k + 2, domain)?;
            let values: Vec<f64> = rule.points.iter().map(|&x| source(x)).collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalFailure(format!("source is not finite on element {}", space.element(a))));
            }
            if values.iter().all(|&v| v == 0.0) {
                return Ok(vec![0.0; n]);
            }
            if l == 0 {
                return Err(Error::UnrepresentableSource { degree: k });
            }
            let mut b = vec![0.0; l];
            for ((&x, &w), &f) in rule.points.iter().zip(&rule.weights).zip(&values) {
                for (r, ps) in eval_basis(space.frame(a), k - 2, x).values.into_iter().enumerate() {
                    b[r] += w * ps * f;
                }
            }
            let c = weak_trefftz_constraint(cut, space, a, alpha, velocity, domain)?;
            Ok(svd(&c)?.solve_min_norm(&b, RANK_TOLERANCE))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(locals.concat())
}

/// Weighted least-squares `ℙ^{k−2}` coefficients (in `frame`) of the source
/// sampled on `rules`; `None` when the source vanishes at every point.
fn project_source(
    frame: &Frame,
    k: usize,
    rules: &[QuadratureRule],
    laplacian: &(dyn Fn(Point) -> f64 + Sync),
    element: usize,
) -> Result<Option<Vec<f64>>> {
    let l = dim(k as isize - 2);
    let npts: usize = rules.iter().map(|r| r.len()).sum();
    let mut values = Vec::with_capacity(npts);
    for rule in rules {
        values.extend(rule.points.iter().map(|&x| laplacian(x)));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(format!("source is not finite on element {element}")));
    }
    if values.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    if l == 0 {
        return Err(Error::UnrepresentableSource { degree: k });
    }
    let mut e = DenseMatrix::zeros(npts, l);
    let mut rhs = vec![0.0; npts];
    let points = rules.iter().flat_map(|r| r.points.iter().zip(&r.weights));
    for (q, (&x, &w)) in points.enumerate() {
        let sw = w.sqrt();
        for (r, v) in eval_basis(frame, k - 2, x).values.into_iter().enumerate() {
            e[(q, r)] = sw * v;
        }
        rhs[q] = sw * values[q];
    }
    Ok(Some(svd(&e)?.solve_min_norm(&rhs, RANK_TOLERANCE)))
}

/// Element-wise particular solution: `u_f|_T = C_T⁺ Π_{k−2} s` with `Π_{k−2}`
/// the `L²` projection onto `ℙ^{k−2}(T)`, so that `Δu_f ≈ s`.
pub fn particular_solution(
    cut: &CutMesh<'_>,
    space: &DgSpace,
    laplacian: &(dyn Fn(Point) -> f64 + Sync),
    domain: ConstraintDomain,
) -> Result<Vec<f64>> {
    let k = space.k;
    let n = space.local_dim();
    let locals = (0..space.num_elements())
        .into_par_iter()
        .map(|a| -> Result<Vec<f64>> {
            let rule = constraint_rule(cut, space, a, 2 * k + 2, domain)?;
            match project_source(space.frame(a), k, &[rule], laplacian, space.element(a))? {
                None => Ok(vec![0.0; n]),
                Some(s_t) => Ok(svd(&trefftz_constraint(space, a))?.solve_min_norm(&s_t, RANK_TOLERANCE)),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(locals.concat())
}

/// Patch-wise particular solution: one polynomial per aggregate with
/// `Δu_f = Π_{k−2}(ω) s`, restricted to every member element.
pub fn aggregated_particular_solution(
    cut: &CutMesh<'_>,
    space: &DgSpace,
    patches: &PatchDecomposition,
    laplacian: &(dyn Fn(Point) -> f64 + Sync),
    domain: ConstraintDomain,
) -> Result<Vec<f64>> {
    let k = space.k;
    let n = space.local_dim();
    let per_patch = (0..patches.num_patches())
        .into_par_iter()
        .map(|p| -> Result<Vec<(usize, Vec<f64>)>> {
            let elements = patch_elements(cut, patches, p);
            let root = cut.topology.active_index(patches.patches()[p].root).expect("patch root is active");
            let rules = elements
                .iter()
                .map(|&a| constraint_rule(cut, space, a, 2 * k + 2, domain))
                .collect::<Result<Vec<_>>>()?;
            let root_frame = space.frame(root);
            let Some(s) = project_source(root_frame, k, &rules, laplacian, space.element(root))? else {
                return Ok(elements.iter().map(|&a| (a, vec![0.0; n])).collect());
            };
            let u_root = svd(&trefftz_constraint(space, root))?.solve_min_norm(&s, RANK_TOLERANCE);
            elements
                .iter()
                .map(|&a| {
                    if a == root {
                        return Ok((a, u_root.clone()));
                    }
                    // Re-expand the aggregate polynomial in the member's own frame.
                    let rule = cut.full_rule(space.element(a), 2 * k);
                    let mut e = DenseMatrix::zeros(rule.len(), n);
                    let mut rhs = vec![0.0; rule.len()];
                    for (q, (&x, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                        let sw = w.sqrt();
                        for (j, v) in eval_basis(space.frame(a), k, x).values.into_iter().enumerate() {
                            e[(q, j)] = sw * v;
                        }
                        rhs[q] = sw * eval(root_frame, k, &u_root, x).0;
                    }
                    Ok((a, svd(&e)?.solve_min_norm(&rhs, RANK_TOLERANCE)))
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut u = vec![0.0; space.ndofs()];
    for (a, c) in per_patch.into_iter().flatten() {
        u[space.dof_range(a)].copy_from_slice(&c);
    }
    Ok(u)
}
