use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use super::{DenseMatrix, LuFactor};
use crate::error::{Error, Result};

/// Rows per rayon task in the parallel matvec.
const PAR_ROW_CHUNK: usize = 512;

/// Compressed sparse row matrix with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from `(row, col, value)` triplets; duplicates are summed and
    /// entries below `1e-300` in magnitude are dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); nrows];
        for (i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            *rows[i].entry(j).or_insert(0.0) += v;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (j, v) in row {
                if v.abs() >= 1e-300 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(a: &DenseMatrix) -> Self {
        let triplets = (0..a.nrows())
            .flat_map(|i| (0..a.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, a[(i, j)]));
        Self::from_triplets(a.nrows(), a.ncols(), triplets)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)))
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |p| vals[p])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = A·x`. Rows are independent so the parallel result is bit-identical
    /// to the serial one.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "matvec: x has wrong length");
        assert_eq!(y.len(), self.nrows, "matvec: y has wrong length");
        let row_dot = |i: usize| -> f64 {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
        };
        if self.nrows >= 4 * PAR_ROW_CHUNK {
            y.par_chunks_mut(PAR_ROW_CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| {
                    for (k, yi) in chunk.iter_mut().enumerate() {
                        *yi = row_dot(c * PAR_ROW_CHUNK + k);
                    }
                });
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row_dot(i);
            }
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[(i, j)] = v;
            }
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|A_ij − A_ji|` over the stored pattern.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Coordinate text dump, one `i j value` line per stored entry.
    pub fn write_coordinate<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                writeln!(out, "{i} {j} {v:.17e}")?;
            }
        }
        Ok(())
    }
}

/// Square sparse matrix made of dense blocks on a (possibly non-uniform)
/// block partition of the unknowns.
#[derive(Clone, Debug)]
pub struct BlockSparseMatrix {
    offsets: Vec<usize>,
    rows: Vec<BTreeMap<usize, DenseMatrix>>,
}

impl BlockSparseMatrix {
    pub fn new(block_sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(block_sizes.len() + 1);
        offsets.push(0);
        for s in block_sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        Self {
            offsets,
            rows: vec![BTreeMap::new(); block_sizes.len()],
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn block_size(&self, b: usize) -> usize {
        self.offsets[b + 1] - self.offsets[b]
    }

    pub fn block_range(&self, b: usize) -> std::ops::Range<usize> {
        self.offsets[b]..self.offsets[b + 1]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Add `m` to block `(i, j)`.
    pub fn add_block(&mut self, i: usize, j: usize, m: &DenseMatrix) {
        assert_eq!(m.shape(), (self.block_size(i), self.block_size(j)), "block shape mismatch");
        match self.rows[i].get_mut(&j) {
            Some(existing) => existing.add_assign(m),
            None => {
                self.rows[i].insert(j, m.clone());
            }
        }
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&DenseMatrix> {
        self.rows[i].get(&j)
    }

    /// Nonzero blocks of block row `i`, sorted by column block.
    pub fn block_row(&self, i: usize) -> impl Iterator<Item = (usize, &DenseMatrix)> {
        self.rows[i].iter().map(|(&j, m)| (j, m))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        let mut y = vec![0.0; self.dim()];
        for i in 0..self.num_blocks() {
            let yi = &mut y[self.block_range(i)];
            for (j, m) in self.block_row(i) {
                let xj = &x[self.block_range(j)];
                for (r, out) in yi.iter_mut().enumerate() {
                    *out += m.row(r).iter().zip(xj).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        y
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let n = self.dim();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..self.num_blocks() {
            for r in 0..self.block_size(i) {
                for (j, m) in self.block_row(i) {
                    let c0 = self.offsets[j];
                    for (c, &v) in m.row(r).iter().enumerate() {
                        if v.abs() >= 1e-300 {
                            col_idx.push(c0 + c);
                            values.push(v);
                        }
                    }
                }
                row_ptr.push(col_idx.len());
            }
        }
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        self.to_csr().to_dense()
    }

    /// Block-Jacobi preconditioner from the diagonal blocks.
    pub fn block_jacobi(&self) -> Result<BlockJacobi> {
        let factors = (0..self.num_blocks())
            .map(|b| {
                let size = self.block_size(b);
                if size == 0 {
                    return Ok(None);
                }
                let diag = self.block(b, b).ok_or_else(|| {
                    Error::NumericalFailure(format!("block {b} has no diagonal block"))
                })?;
                diag.lu().map(Some)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockJacobi {
            offsets: self.offsets.clone(),
            factors,
        })
    }
}

/// `z = M⁻¹ r` for a Krylov solver.
pub trait Preconditioner: Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Inverse of the block diagonal, applied with dense LU factors per block.
pub struct BlockJacobi {
    offsets: Vec<usize>,
    factors: Vec<Option<LuFactor>>,
}

impl Preconditioner for BlockJacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for (b, factor) in self.factors.iter().enumerate() {
            let range = self.offsets[b]..self.offsets[b + 1];
            if let Some(f) = factor {
                f.solve_into(&r[range.clone()], &mut z[range]);
            }
        }
    }
}
