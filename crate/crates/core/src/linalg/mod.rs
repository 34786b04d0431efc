//! Small dense and sparse linear algebra used by the embeddings and solvers.

mod dense;
mod direct;
mod krylov;
mod sparse;
mod svd;

pub use dense::{DenseMatrix, LuFactor};
pub use direct::solve_direct;
pub use krylov::{solve_bicgstab, solve_cg, Solution, SolverOptions};
pub use sparse::{BlockJacobi, BlockSparseMatrix, CsrMatrix, IdentityPreconditioner, Preconditioner};
pub use svd::{householder_qr, svd, symmetric_eigen, Svd, RANK_TOLERANCE};
