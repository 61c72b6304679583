//! Self-contained numerical core for the grid-hardening toolkit.
//!
//! * [`solve_lp`]: bounded-variable revised simplex over a sparse LU basis
//!   factorization with eta-file updates. A dual simplex phase runs first
//!   from a slack basis, the primal phase finishes with devex pricing, and
//!   Bland's rule takes over when the objective stalls.
//! * [`solve_milp`]: best-first branch-and-bound over binary variables.
//! * [`solve_with_cuts`]: cutting-plane loop driven by a separation oracle.
//! * [`lp_format`]: LP-format writer and reader for external cross-checks.

mod branch;
mod cuts;
mod error;
mod factor;
pub mod lp_format;
mod problem;
mod report;
mod simplex;
mod tolerances;

pub use branch::{solve_milp, MilpOptions, NodeAction, NodeTrace};
pub use cuts::{solve_with_cuts, CutLoopOptions, CutLoopReport, Separation, ViolationOracle};
pub use error::MilpError;
pub use problem::{Constraint, LinearProgram, Sense, VarKind, Variable};
pub use report::{SolveReport, Status};
pub use simplex::{solve_lp, solve_lp_warm, Basis, LpOptions, VarStatus};
pub use tolerances::Tolerances;

pub type Result<T, E = MilpError> = std::result::Result<T, E>;
