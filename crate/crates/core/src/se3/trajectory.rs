use std::cmp::Ordering;
use std::io::{BufRead, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{log_so3, unwrap_rotation_vector, Pose, Se3Error};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GripperSample {
    pub t: f64,
    pub pose: Pose,
    pub grasp: bool,
}

/// Timestamped gripper poses with binary grasp state.
#[derive(Clone, Debug, PartialEq)]
pub struct GripperTrajectory {
    samples: Vec<GripperSample>,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    t: f64,
    p: [f64; 3],
    q: [f64; 4],
    grasp: u8,
}

impl GripperTrajectory {
    pub fn new(samples: Vec<GripperSample>) -> Result<Self, Se3Error> {
        if samples.is_empty() {
            return Err(Se3Error::EmptyTrajectory);
        }
        for (i, w) in samples.windows(2).enumerate() {
            if w[1].t.partial_cmp(&w[0].t) != Some(Ordering::Greater) {
                return Err(Se3Error::NonIncreasingTime { index: i + 1 });
            }
        }
        Ok(Self { samples })
    }

    /// Uniformly timed trajectory starting at `t0`, grasp open throughout.
    pub fn from_poses(poses: &[Pose], t0: f64, dt: f64) -> Result<Self, Se3Error> {
        Self::new(
            poses
                .iter()
                .enumerate()
                .map(|(i, pose)| GripperSample {
                    t: t0 + dt * i as f64,
                    pose: *pose,
                    grasp: false,
                })
                .collect(),
        )
    }

    pub fn samples(&self) -> &[GripperSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.samples.iter().map(|s| s.pose).collect()
    }

    /// Left-multiplies every pose by `g`.
    pub fn transformed(&self, g: &Pose) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .map(|s| GripperSample {
                    pose: g.compose(&s.pose),
                    ..*s
                })
                .collect(),
        }
    }

    /// Reads JSON Lines, one `{"t", "p", "q", "grasp"}` object per line.
    /// Blank lines are skipped; errors carry the 1-based line number.
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, Se3Error> {
        let mut samples = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Se3Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SampleRecord = serde_json::from_str(&line).map_err(|e| Se3Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if rec.grasp > 1 || !rec.t.is_finite() {
                return Err(Se3Error::Parse {
                    line: line_no,
                    message: "grasp must be 0 or 1 and t finite".into(),
                });
            }
            let pose = Pose::from_parts(rec.p, rec.q).map_err(|e| Se3Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            samples.push(GripperSample {
                t: rec.t,
                pose,
                grasp: rec.grasp == 1,
            });
        }
        Self::new(samples)
    }

    /// Writes JSON Lines. Floats use the shortest round-trip representation,
    /// so every value survives a write/read cycle bit-exactly.
    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for s in &self.samples {
            let t = s.pose.translation();
            let rec = SampleRecord {
                t: s.t,
                p: [t.x, t.y, t.z],
                q: s.pose.quaternion_wxyz(),
                grasp: u8::from(s.grasp),
            };
            serde_json::to_writer(&mut writer, &rec)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn relative_positions_orientations(
        &self,
        start: usize,
        len: usize,
    ) -> Result<RelativeFrames, Se3Error> {
        if start + len > self.samples.len() {
            return Err(Se3Error::WindowOutOfRange {
                start,
                len,
                available: self.samples.len(),
            });
        }
        let poses: Vec<Pose> = self.samples[start..start + len]
            .iter()
            .map(|s| s.pose)
            .collect();
        relative_positions_orientations(&poses)
    }
}

/// Relative positions and rotation vectors, one entry per pose.
pub type RelativeFrames = (Vec<Vector3<f64>>, Vec<Vector3<f64>>);

/// Positions and unwrapped rotation vectors of every pose relative to the first.
///
/// The first entries are exactly zero. Each rotation vector is the branch closest
/// to its predecessor, so consecutive differences stay small through half turns.
pub fn relative_positions_orientations(poses: &[Pose]) -> Result<RelativeFrames, Se3Error> {
    if poses.len() < 3 {
        return Err(Se3Error::WindowTooShort {
            len: poses.len(),
            min: 3,
        });
    }
    let origin = poses[0];
    let origin_inv = origin.rotation().inverse();
    let mut positions = Vec::with_capacity(poses.len());
    let mut orientations = Vec::with_capacity(poses.len());
    positions.push(Vector3::zeros());
    orientations.push(Vector3::zeros());
    for pose in &poses[1..] {
        positions.push(origin_inv * (pose.translation() - origin.translation()));
        let prev = orientations.last().copied().unwrap_or_else(Vector3::zeros);
        let rel = origin_inv * pose.rotation();
        orientations.push(unwrap_rotation_vector(&log_so3(&rel), &prev));
    }
    Ok((positions, orientations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    #[test]
    fn rejects_empty_and_non_increasing() {
        assert!(matches!(
            GripperTrajectory::new(vec![]),
            Err(Se3Error::EmptyTrajectory)
        ));
        let s = GripperSample {
            t: 0.0,
            pose: Pose::identity(),
            grasp: false,
        };
        let err = GripperTrajectory::new(vec![s, s]).unwrap_err();
        assert!(matches!(err, Se3Error::NonIncreasingTime { index: 1 }));
    }

    #[test]
    fn jsonl_reports_bad_line() {
        let mut text = String::new();
        for i in 0..6 {
            text.push_str(&format!(
                "{{\"t\": {}, \"p\": [0,0,0], \"q\": [1,0,0,0], \"grasp\": 0}}\n",
                i as f64 * 0.1
            ));
        }
        text.push_str("{\"t\": 0.6, \"p\": [0,0], \"q\": [1,0,0,0], \"grasp\": 0}\n");
        let err = GripperTrajectory::read_jsonl(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Se3Error::Parse { line: 7, .. }), "{err}");
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let poses: Vec<Pose> = (0..5)
            .map(|i| {
                Pose::new(
                    Vector3::new(0.1 * i as f64, 1.0 / 3.0, -2.0e-7),
                    UnitQuaternion::from_euler_angles(0.1, 0.2 * i as f64, 0.3),
                )
            })
            .collect();
        let traj = GripperTrajectory::from_poses(&poses, 0.0, 0.1).unwrap();
        let mut buf = Vec::new();
        traj.write_jsonl(&mut buf).unwrap();
        let back = GripperTrajectory::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn constant_window_is_all_zero() {
        let p =
            Pose::from_rotation_vector(Vector3::new(1.0, 2.0, 3.0), Vector3::new(0.3, 0.1, -0.2));
        let (ps, rs) = relative_positions_orientations(&[p; 5]).unwrap();
        assert!(ps.iter().all(|v| v.norm() < 1e-15));
        assert!(rs.iter().all(|v| v.norm() < 1e-15));
    }

    #[test]
    fn straight_line_in_initial_frame() {
        let rot = UnitQuaternion::from_euler_angles(0.0, 0.0, 0.7);
        let (v, dt) = (0.5, 0.02);
        let poses: Vec<Pose> = (0..6)
            .map(|k| Pose::new(rot * Vector3::new(k as f64 * v * dt, 0.0, 0.0), rot))
            .collect();
        let (ps, _) = relative_positions_orientations(&poses).unwrap();
        for (k, p) in ps.iter().enumerate() {
            assert!((p - Vector3::new(k as f64 * v * dt, 0.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn window_checks() {
        let traj = GripperTrajectory::from_poses(&[Pose::identity(); 4], 0.0, 0.1).unwrap();
        assert!(traj.relative_positions_orientations(0, 2).is_err());
        assert!(traj.relative_positions_orientations(2, 3).is_err());
        assert!(traj.relative_positions_orientations(1, 3).is_ok());
    }

    #[test]
    fn unwrapping_keeps_spin_continuous() {
        // steady spin about z through more than a full turn
        let poses: Vec<Pose> = (0..40)
            .map(|k| {
                Pose::from_rotation_vector(
                    Vector3::zeros(),
                    Vector3::new(0.0, 0.0, 0.25 * k as f64),
                )
            })
            .collect();
        let (_, rs) = relative_positions_orientations(&poses).unwrap();
        for w in rs.windows(2) {
            assert!(((w[1] - w[0]).norm() - 0.25).abs() < 1e-9);
        }
    }
}
