//! Kinematic-tree robot models, forward kinematics and geometric Jacobians.
//!
//! Models load from a JSON document:
//!
//! ```json
//! {"joints": [{"name": "j1", "kind": "revolute", "parent": "base", "child": "l1",
//!              "origin": {"p": [0, 0, 0], "q": [1, 0, 0, 0]}, "axis": [0, 0, 1],
//!              "limits": {"q": [-3.1, 3.1], "v": 2.0, "a": 20.0}}],
//!  "gripper": {"link": "l1", "offset": {"p": [0.5, 0, 0], "q": [1, 0, 0, 0]}}}
//! ```
//!
//! `kind` is one of `revolute`, `prismatic`, `planar` (x, y, yaw), `floating`
//! (x, y, z, rotation vector) or `fixed`. `limits` is either one object shared
//! by every DOF of the joint or a list with one object per DOF; `q` may be
//! omitted for an unbounded coordinate.

mod fk;
mod limits;
mod model;

pub use fk::{forward_kinematics, integrate, jacobian};
pub use limits::velocity_bounds;
pub use model::{DofLimits, GripperFrame, Joint, JointKind, JointState, PoseRecord, RobotModel};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("joint state has non-finite entries")]
    NonFinite,
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
    #[error("robot model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
