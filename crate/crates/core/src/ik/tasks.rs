use nalgebra::{DMatrix, DVector};

use super::{IkError, TaskSpec};
use crate::kinematics::{forward_kinematics, jacobian, RobotModel};
use crate::se3::{pose_error, Pose};

/// Proportional gains of the gripper and posture tasks, in 1/s.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskGains {
    /// Linear x, y, z then angular x, y, z.
    pub grip: [f64; 6],
    /// One gain per DOF.
    pub bias: DVector<f64>,
}

impl TaskGains {
    pub fn uniform(dof: usize, grip: f64, bias: f64) -> Self {
        Self {
            grip: [grip; 6],
            bias: DVector::from_element(dof, bias),
        }
    }
}

/// The gripper-pose task (priority 1) and the posture-bias task (priority 2).
///
/// The gripper error pairs the root-frame translation error with the rotation
/// vector of `R_des R_curᵀ`, matching the root-frame geometric Jacobian.
pub fn build_tasks(
    model: &RobotModel,
    q: &DVector<f64>,
    x_des: &Pose,
    q_bias: &DVector<f64>,
    gains: &TaskGains,
) -> Result<Vec<TaskSpec>, IkError> {
    let n = model.dof();
    for len in [q_bias.len(), gains.bias.len()] {
        if len != n {
            return Err(IkError::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }
    let current = forward_kinematics(model, q)?;
    let err = pose_error(x_des, &current);
    let grip = DVector::from_fn(6, |i, _| gains.grip[i] * err[i]);
    let bias = gains.bias.component_mul(&(q_bias - q));
    Ok(vec![
        TaskSpec::new(1, jacobian(model, q)?, grip),
        TaskSpec::new(2, DMatrix::identity(n, n), bias),
    ])
}
