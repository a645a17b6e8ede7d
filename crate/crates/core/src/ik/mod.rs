//! Prioritized velocity-level inverse kinematics with task scaling.
//!
//! Each priority level `i` asks for `J_i a = c_i ẋ_i` with the largest scale
//! `c_i ∈ [0, 1]` that keeps every higher level exact and every box and
//! Cartesian row satisfied. Once the scales are fixed, the returned `a`
//! minimizes `½ aᵀHa` over what remains.
//!
//! A level only constrains the directions it can still reach: the task is
//! projected onto the range of `J_i Z`, where `Z` spans the null space left by
//! higher levels, and singular values below [`SINGULAR_CUTOFF`] are dropped.
//! For the lower levels this is the least-squares optimality condition, so a
//! task that cannot be met exactly is met as closely as possible.
//!
//! [`solve_esns`] is the production solver. [`solve_reference_qp`] answers the
//! same question by brute-force enumeration and serves as its oracle.

mod active_set;
mod esns;
mod problem;
mod reference;
mod tasks;

pub use esns::{solve_esns, EsnsSolver};
pub use problem::{
    reduce_task, CartesianRow, ConstraintSet, IkSolution, ReducedTask, SolveStatus, TaskSpec,
    FEASIBILITY_TOL, SINGULAR_CUTOFF,
};
pub use reference::{scale_is_feasible, solve_reference_qp};
pub use tasks::{build_tasks, TaskGains};

use thiserror::Error;

use crate::kinematics::KinematicsError;

#[derive(Debug, Error)]
pub enum IkError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("duplicate task priority {0}")]
    DuplicatePriority(usize),
    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),
    #[error("weighting must be positive, got {0}")]
    BadWeight(f64),
    #[error("reference solver is limited to {max} joints, got {got}")]
    TooLarge { max: usize, got: usize },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}
