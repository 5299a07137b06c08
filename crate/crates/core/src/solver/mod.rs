//! Cone reformulation, node solves and branch-and-bound.

pub mod bnb;
pub mod cone;

pub use bnb::{branch_and_bound, BnbOptions, Solution, SolveStatus};
pub use cone::{solve_cone, to_cone, to_cone_with_bounds, ConeOptions, ConeProgram, ConeStatus, NodeResult};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("system has {0} nonconvex equalities; only convex systems can be solved")]
    Nonconvex(usize),
    #[error("variable {0} has an empty bound interval")]
    EmptyBounds(String),
    #[error("constraint {0} is constant and violated")]
    InfeasibleRow(String),
}
