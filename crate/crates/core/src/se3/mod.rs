//! Rigid-body poses, frame-local increments and gripper trajectories.

mod pose;
mod trajectory;

pub use pose::{
    exp_so3, log_rotation_matrix, log_so3, pose_error, skew, unwrap_rotation_vector,
    DifferentialPose, Pose,
};
pub use trajectory::{
    relative_positions_orientations, GripperSample, GripperTrajectory, RelativeFrames,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Se3Error {
    #[error("relative rotation is a half turn; rotation vector is ambiguous")]
    HalfTurn,
    #[error("pose must have a finite translation and a nonzero finite quaternion")]
    InvalidPose,
    #[error("trajectory has no samples")]
    EmptyTrajectory,
    #[error("timestamps must be strictly increasing (sample {index})")]
    NonIncreasingTime { index: usize },
    #[error("window of {len} poses is too short (need at least {min})")]
    WindowTooShort { len: usize, min: usize },
    #[error("window [{start}, {start}+{len}) exceeds trajectory of {available} samples")]
    WindowOutOfRange {
        start: usize,
        len: usize,
        available: usize,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}
