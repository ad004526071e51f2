//! Recovery of unknown orthogonal matrices `V_1, ..., V_{K-1}` from the linear
//! system `X_K = X_1 V_1 + ... + X_{K-1} V_{K-1}`.
//!
//! The main solver relaxes the homogenized least-squares problem to a
//! semidefinite program over block Gram matrices and rounds the result back
//! onto the orthogonal group. Four least-squares baselines (LS, C-LS, LS+ and
//! C-LS+) are provided for comparison, together with error metrics and a
//! brute-force oracle for the scalar (`D = 1`) case.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod matprims;
pub mod problem;
pub mod report;
pub mod sdp;
pub mod solver;

pub use error::{Error, Result};
pub use matprims::Mat;
pub use problem::{CostMatrix, NoiseSpec, NoiseTarget, OrthogonalSet, ProblemInstance};
pub use report::SolverReport;
pub use solver::{SolverKind, SolverOptions};
