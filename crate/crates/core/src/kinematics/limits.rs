use nalgebra::DVector;

use super::{JointState, RobotModel};

/// Per-DOF velocity box for the next control step of length `dt`.
///
/// The position, velocity and acceleration limits are intersected:
///
/// ```text
/// upper = min(v_max, (q_max − q)/dt, q̇ + a_max·dt)
/// lower = max(−v_max, (q_min − q)/dt, q̇ − a_max·dt)
/// ```
///
/// When the acceleration band does not meet the position/velocity band, the
/// box collapses to the point of the position/velocity band nearest to it, so
/// position limits always win over acceleration limits.
pub fn velocity_bounds(
    model: &RobotModel,
    state: &JointState,
    dt: f64,
) -> (DVector<f64>, DVector<f64>) {
    let n = model.dof();
    let mut lower = DVector::zeros(n);
    let mut upper = DVector::zeros(n);
    for (i, l) in model.limits().iter().enumerate() {
        let (q, qd) = (state.q[i], state.qdot[i]);
        let (mut hard_lo, mut hard_hi) = (-l.velocity, l.velocity);
        if let Some((qmin, qmax)) = l.position {
            hard_lo = hard_lo.max((qmin - q) / dt);
            hard_hi = hard_hi.min((qmax - q) / dt);
        }
        if hard_lo > hard_hi {
            // outside the position range: head back as fast as allowed
            let p = if hard_hi < 0.0 {
                -l.velocity
            } else {
                l.velocity
            };
            lower[i] = p;
            upper[i] = p;
            continue;
        }
        let (soft_lo, soft_hi) = (qd - l.acceleration * dt, qd + l.acceleration * dt);
        let lo = hard_lo.max(soft_lo);
        let hi = hard_hi.min(soft_hi);
        if lo <= hi {
            lower[i] = lo;
            upper[i] = hi;
        } else {
            let p = if soft_lo > hard_hi { hard_hi } else { hard_lo };
            lower[i] = p;
            upper[i] = p;
        }
    }
    (lower, upper)
}
