//! Sparse linear programming for problems with individually bounded columns.
//!
//! [`LpModel`] collects columns and rows; [`solve`] runs a two-phase revised
//! simplex over a sparse LU of the basis. Everything is generic over
//! [`Scalar`], with `f64` aliases at the crate root.

mod factor;
pub mod model;
pub mod mps;
mod presolve;
mod scalar;
pub mod simplex;
pub mod solution;
#[cfg(feature = "vertex-oracle")]
pub mod vertex;

pub use model::{Con, LpModel, ModelError, Relation, Var};
pub use scalar::Scalar;
pub use simplex::{solve, solve_from, SolveOptions, SolverError};
pub use solution::{Basis, LpSolution, SolveStatistics, Status, VarStatus};

pub type Model = LpModel<f64>;
pub type Solution = LpSolution<f64>;
pub type Options = SolveOptions<f64>;
