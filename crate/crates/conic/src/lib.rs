//! Small-scale conic optimization toolkit.
//!
//! Solves dense mixed-cone programs of the form
//!
//! ```text
//! minimize    c'x
//! subject to  A x = b,   x in K
//! ```
//!
//! where `K` is a Cartesian product of nonnegative-orthant segments,
//! second-order cones, and Hermitian-PSD blocks represented through their
//! real symmetric embedding. The solver is a homogeneous self-dual
//! embedding interior-point method with Nesterov-Todd scaling and Mehrotra
//! predictor-corrector steps, falling back to short centering steps when
//! the corrector direction is unusable.
//!
//! The [`hermitian`] module carries the complex Hermitian matrix type, its
//! `[[Re, -Im], [Im, Re]]` embedding, and eigenvalue helpers used both by
//! the solver and by callers that audit PSD-ness of results.

// validation guards use `!(x > 0.0)` so NaN input is rejected along with
// out-of-range values; the suggested partial_cmp form obscures that
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cones;
pub mod hermitian;
pub mod problem;
pub mod solver;

pub use cones::{svec, svec_identity, svec_len, unsvec, Cone};
pub use hermitian::{embed_vector, min_eig, CMat, CVec, HermitianMatrix, RMat, RVec};
pub use problem::{ConicError, ConicProblem};
pub use solver::{
    solve, solve_with, ConicSolution, InfeasKind, IterStat, SolveStatus, SolverOptions,
};
