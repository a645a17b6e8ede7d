//! Motion retargeting of handheld-gripper trajectories onto kinematic-tree
//! robots through prioritized, constraint-aware differential IK, together with
//! DHB motion invariants and the imitation-learning loss evaluators built on them.

pub mod cli;
pub mod dhb;
pub mod fixtures;
pub mod ik;
pub mod kinematics;
pub mod losses;
pub mod retarget;
pub mod se3;
