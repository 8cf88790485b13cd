//! Dense linear algebra used by the spectral adapter.

mod eigen;

pub use eigen::{top_eigenpairs, EigenError, EigenSolver, SymmetricEigen, TopEigen, AUTO_FULL_LIMIT};
