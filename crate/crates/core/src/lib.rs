//! Structured total least squares through a semidefinite relaxation.
//!
//! An affine structure `S(u) = base + Σ u_j D_j` is lifted to a quadratic
//! program in `(1, v) ⊗ z`; its Shor relaxation is solved by an interior-point
//! method, a rank-one solution yields the global minimizer, and the dual
//! solution certifies it.

pub mod baseline;
pub mod bench;
pub mod error;
pub mod extract;
pub mod lift;
pub mod linalg;
pub mod sdp;
pub mod structure;

pub use error::{Result, StlsError};
pub use extract::{solve_instance, StlsSolution};
pub use lift::LiftedProblem;
pub use sdp::{assemble_primal, solve, SdpProblem, SdpSolution, SolveStatus, SolverConfig};
pub use structure::{AffineStructure, ProblemInstance, WeightSpec};
