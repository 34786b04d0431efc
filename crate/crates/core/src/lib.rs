//! Unfitted discontinuous Galerkin and Trefftz discretisations on level-set
//! geometries, stabilised by ghost penalties, patch-wise ghost penalties or
//! cell aggregation, all expressed as embeddings into the DG space.

pub mod assembly;
pub mod basis;
pub mod cutgeom;
pub mod embedding;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod patches;
pub mod quadrature;

pub use error::{Error, Result};

pub use assembly::{BoundaryCondition, FormParams, GhostScaling, ProblemData, SpaceKind, Stabilisation};
pub use basis::DgSpace;
pub use cutgeom::{classify, CutMesh, CutTopology, ElementClass, LevelSet};
pub use embedding::{ConstraintDomain, EmbeddingMap};
pub use harness::{run_case, solve_level, CaseDefinition, CaseName, ErrorReport, RunOptions};
pub use linalg::{BlockSparseMatrix, CsrMatrix, DenseMatrix, SolverOptions};
pub use mesh::{BackgroundMesh, Point, Rectangle};
pub use patches::{build_patches, PatchDecomposition};
