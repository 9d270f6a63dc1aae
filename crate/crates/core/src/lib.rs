//! Optimization toolbox for agile spacecraft slews.
//!
//! * [`qcqp`]: primal-dual interior-point solver for convex QCQPs.
//! * [`scp`]: stage-structured optimal control solved by sequential convex
//!   programming on top of the QCQP solver.
//! * [`spacecraft`]: rigid-body attitude and roof CMG cluster models.
//! * [`guidance`]: bang-bang baseline, joint and sequential slew optimization.
//! * [`harness`]: configuration, file formats, benchmarks and slew runs.

pub mod guidance;
pub mod harness;
pub mod linalg;
pub mod qcqp;
pub mod scp;
pub mod spacecraft;

pub use qcqp::{
    kkt_residuals, solve_qcqp, validate_problem, IpmIterate, IterationRecord, KktResiduals,
    QcqpError, QcqpProblem, QcqpSolution, QuadConstraint, SolveOptions, SolveStatus,
};
