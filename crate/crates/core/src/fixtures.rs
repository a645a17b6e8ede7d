//! Synthetic gripper trajectories and helpers used by the tests, the
//! acceptance suite and the `fixture` CLI subcommand.

use std::f64::consts::PI;

use nalgebra::{DVector, Vector3};
use rand::Rng;

use crate::se3::{GripperSample, GripperTrajectory, Pose, Se3Error};

/// Horizontal circle with fixed orientation, sampled at `rate` Hz from
/// `t = 0` for `duration` seconds (inclusive of both ends).
pub fn circle(
    center: Vector3<f64>,
    radius: f64,
    frequency: f64,
    duration: f64,
    rate: f64,
    orientation: Pose,
) -> Result<GripperTrajectory, Se3Error> {
    let n = (duration * rate).round() as usize + 1;
    let poses: Vec<Pose> = (0..n)
        .map(|i| {
            let phase = 2.0 * PI * frequency * i as f64 / rate;
            let p = center + radius * Vector3::new(phase.cos(), phase.sin(), 0.0);
            Pose::new(p, *orientation.rotation())
        })
        .collect();
    GripperTrajectory::from_poses(&poses, 0.0, 1.0 / rate)
}

/// `n` samples moving by `step` (world frame) every `dt`.
pub fn line(
    start: Pose,
    step: Vector3<f64>,
    n: usize,
    dt: f64,
) -> Result<GripperTrajectory, Se3Error> {
    let poses: Vec<Pose> = (0..n)
        .map(|i| Pose::new(start.translation() + step * i as f64, *start.rotation()))
        .collect();
    GripperTrajectory::from_poses(&poses, 0.0, dt)
}

pub fn stationary(pose: Pose, n: usize, dt: f64) -> Result<GripperTrajectory, Se3Error> {
    GripperTrajectory::from_poses(&vec![pose; n], 0.0, dt)
}

/// Accelerating, twisting curve whose time reversal looks different.
/// Grasp closes halfway through.
pub fn asymmetric(n: usize, dt: f64) -> Result<GripperTrajectory, Se3Error> {
    let samples = (0..n)
        .map(|i| {
            let s = i as f64 / n.max(2) as f64;
            let p = Vector3::new(0.3 * s * s, 0.1 * (3.0 * s).sin(), 0.05 * s * s * s);
            let r = Vector3::new(0.2 * s, 0.4 * s * s, 0.1 * (2.0 * s).sin());
            GripperSample {
                t: i as f64 * dt,
                pose: Pose::from_rotation_vector(p, r),
                grasp: i >= n / 2,
            }
        })
        .collect();
    GripperTrajectory::new(samples)
}

/// Two unit steps along x, then one along y.
pub fn l_path() -> Vec<Pose> {
    [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [2.0, 0.0, 0.0],
        [2.0, 1.0, 0.0],
    ]
    .iter()
    .map(|p| Pose::from_translation(Vector3::new(p[0], p[1], p[2])))
    .collect()
}

/// Smooth random walk in SE(3) with steps of about `scale` metres and radians.
pub fn random_walk<R: Rng>(
    rng: &mut R,
    n: usize,
    dt: f64,
    scale: f64,
) -> Result<GripperTrajectory, Se3Error> {
    let mut pose = Pose::identity();
    let mut velocity = Vector3::zeros();
    let mut spin = Vector3::zeros();
    let mut poses = Vec::with_capacity(n);
    for _ in 0..n {
        poses.push(pose);
        velocity = 0.7 * velocity + 0.3 * scale * random_unit(rng);
        spin = 0.7 * spin + 0.3 * scale * random_unit(rng);
        pose = pose.compose(&Pose::from_rotation_vector(velocity, spin));
    }
    GripperTrajectory::from_poses(&poses, 0.0, dt)
}

/// Uniformly random rigid transform with translation in `[-extent, extent]³`.
pub fn random_rigid<R: Rng>(rng: &mut R, extent: f64) -> Pose {
    let t = Vector3::from_fn(|_, _| rng.random_range(-extent..=extent));
    let angle = rng.random_range(0.0..PI * 0.999);
    Pose::from_rotation_vector(t, random_unit(rng) * angle)
}

fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..=1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Joint angles placing the tip of a three-link planar arm (links `l1`, `l2`,
/// `l3` about z) at `(x, y)` with heading `yaw`, elbow down. `None` when out
/// of reach.
pub fn planar3_ik(lengths: [f64; 3], x: f64, y: f64, yaw: f64) -> Option<DVector<f64>> {
    let [l1, l2, l3] = lengths;
    let (wx, wy) = (x - l3 * yaw.cos(), y - l3 * yaw.sin());
    let c2 = (wx * wx + wy * wy - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    if !(-1.0..=1.0).contains(&c2) {
        return None;
    }
    let q2 = c2.acos();
    let q1 = wy.atan2(wx) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
    let q3 = yaw - q1 - q2;
    Some(DVector::from_vec(vec![q1, q2, q3]))
}
