//! Small dense convex solvers used by the safety filters.

mod oracle;
mod qp;
mod socp;

pub use oracle::{random_feasible_instance, socp_oracle};
pub use qp::qp_single_constraint;
pub use socp::{kkt_residual, socp_solve, SocpOptions, SocpProblem, SocpSolution, SocpSolver, SocpStatus};
