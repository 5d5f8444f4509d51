//! SCA-based penalized relaxation of the activation problem.

pub mod ipm;
pub mod sca;
pub mod subproblem;
pub mod surrogate;

pub use sca::{round_and_repair, run_sca, run_sca_with, SolveResult, TraceRow};
pub use subproblem::{
    assemble_subproblem, penalized_objective, solve_subproblem, ConstraintTag, ConvexSubproblem, ProblemCounts,
    SurrogatePoint,
};
pub use surrogate::{bilinear_lower, bilinear_upper, penalty_tangent, taylor_lb_quadratic};
