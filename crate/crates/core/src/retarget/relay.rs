use crate::se3::{DifferentialPose, GripperTrajectory, Pose, Se3Error};

/// Frame-local steps between consecutive setpoints: step `k` moves sample `k`
/// onto sample `k + 1`, expressed in the frame of sample `k`.
pub fn relay_setpoints(commands: &GripperTrajectory) -> Result<Vec<DifferentialPose>, Se3Error> {
    let samples = commands.samples();
    if samples.len() < 2 {
        return Err(Se3Error::WindowTooShort {
            len: samples.len(),
            min: 2,
        });
    }
    samples
        .windows(2)
        .map(|w| w[0].pose.difference(&w[1].pose))
        .collect()
}

/// Rebuilds absolute poses from `start` and a step stream; the inverse of
/// [`relay_setpoints`].
pub fn accumulate_setpoints(start: &Pose, steps: &[DifferentialPose]) -> Vec<Pose> {
    let mut poses = Vec::with_capacity(steps.len() + 1);
    poses.push(*start);
    for step in steps {
        let last = poses[poses.len() - 1];
        poses.push(last.apply(step));
    }
    poses
}
