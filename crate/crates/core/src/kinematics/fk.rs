use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3};

use super::{JointKind, KinematicsError, RobotModel};
use crate::se3::{exp_so3, log_so3, Pose};

fn joint_motion(kind: JointKind, axis: &Vector3<f64>, q: &[f64]) -> Pose {
    match kind {
        JointKind::Revolute => Pose::new(
            Vector3::zeros(),
            UnitQuaternion::from_scaled_axis(axis * q[0]),
        ),
        JointKind::Prismatic => Pose::from_translation(axis * q[0]),
        JointKind::Planar => Pose::new(
            Vector3::new(q[0], q[1], 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), q[2]),
        ),
        JointKind::Floating => Pose::new(
            Vector3::new(q[0], q[1], q[2]),
            exp_so3(&Vector3::new(q[3], q[4], q[5])),
        ),
        JointKind::Fixed => Pose::identity(),
    }
}

/// Pose of the gripper frame in the root frame.
pub fn forward_kinematics(model: &RobotModel, q: &DVector<f64>) -> Result<Pose, KinematicsError> {
    model.check_dim(q)?;
    let mut pose = Pose::identity();
    for &idx in model.chain() {
        let j = &model.joints()[idx];
        let local = &q.as_slice()[j.offset..j.offset + j.kind.dof()];
        pose = pose
            .compose(&j.origin)
            .compose(&joint_motion(j.kind, &j.axis, local));
    }
    Ok(pose.compose(&model.gripper().offset))
}

/// Geometric Jacobian of the gripper frame: rows are linear then angular
/// velocity in the root frame, one column per DOF.
///
/// Floating-base rotation columns map to angular velocity expressed in the
/// joint's origin frame, matching [`integrate`].
pub fn jacobian(model: &RobotModel, q: &DVector<f64>) -> Result<DMatrix<f64>, KinematicsError> {
    model.check_dim(q)?;
    let mut jac = DMatrix::zeros(6, model.dof());
    let mut frames = Vec::with_capacity(model.chain().len());
    let mut pose = Pose::identity();
    for &idx in model.chain() {
        let j = &model.joints()[idx];
        let pre = pose.compose(&j.origin);
        let local = &q.as_slice()[j.offset..j.offset + j.kind.dof()];
        pose = pre.compose(&joint_motion(j.kind, &j.axis, local));
        frames.push((idx, pre));
    }
    let tip = *pose.compose(&model.gripper().offset).translation();

    let mut set_column = |col: usize, lin: Vector3<f64>, ang: Vector3<f64>| {
        jac.fixed_view_mut::<3, 1>(0, col).copy_from(&lin);
        jac.fixed_view_mut::<3, 1>(3, col).copy_from(&ang);
    };
    for (idx, pre) in frames {
        let j = &model.joints()[idx];
        let rot = pre.rotation();
        let o = j.offset;
        match j.kind {
            JointKind::Revolute => {
                let a = rot * j.axis;
                set_column(o, a.cross(&(tip - pre.translation())), a);
            }
            JointKind::Prismatic => set_column(o, rot * j.axis, Vector3::zeros()),
            JointKind::Planar => {
                set_column(o, rot * Vector3::x(), Vector3::zeros());
                set_column(o + 1, rot * Vector3::y(), Vector3::zeros());
                let pivot = pre.transform_point(&Vector3::new(q[o], q[o + 1], 0.0));
                let a = rot * Vector3::z();
                set_column(o + 2, a.cross(&(tip - pivot)), a);
            }
            JointKind::Floating => {
                let pivot = pre.transform_point(&Vector3::new(q[o], q[o + 1], q[o + 2]));
                for (i, e) in [Vector3::x(), Vector3::y(), Vector3::z()]
                    .iter()
                    .enumerate()
                {
                    let a = rot * e;
                    set_column(o + i, a, Vector3::zeros());
                    set_column(o + 3 + i, a.cross(&(tip - pivot)), a);
                }
            }
            JointKind::Fixed => {}
        }
    }
    Ok(jac)
}

/// Advances a configuration by velocity `v` over `dt`.
///
/// Every coordinate integrates linearly except floating-base rotations, which
/// take the exponential update `R ← exp(ω dt) R` in the joint's origin frame.
pub fn integrate(
    model: &RobotModel,
    q: &DVector<f64>,
    v: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>, KinematicsError> {
    model.check_dim(q)?;
    model.check_dim(v)?;
    let mut out = q + v * dt;
    for j in model.joints() {
        if j.kind != JointKind::Floating {
            continue;
        }
        let o = j.offset + 3;
        let r = Vector3::new(q[o], q[o + 1], q[o + 2]);
        let w = Vector3::new(v[o], v[o + 1], v[o + 2]) * dt;
        let next = log_so3(&(exp_so3(&w) * exp_so3(&r)));
        out.fixed_rows_mut::<3>(o).copy_from(&next);
    }
    Ok(out)
}
