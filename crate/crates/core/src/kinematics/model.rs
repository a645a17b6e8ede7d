use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::KinematicsError;
use crate::se3::Pose;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointKind {
    Revolute,
    Prismatic,
    /// `(x, y, yaw)` in the joint frame's xy-plane.
    Planar,
    /// Translation `(x, y, z)` then rotation vector `(rx, ry, rz)`.
    Floating,
    Fixed,
}

impl JointKind {
    pub fn dof(self) -> usize {
        match self {
            JointKind::Revolute | JointKind::Prismatic => 1,
            JointKind::Planar => 3,
            JointKind::Floating => 6,
            JointKind::Fixed => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DofLimits {
    /// `None` for an unbounded coordinate.
    pub position: Option<(f64, f64)>,
    pub velocity: f64,
    pub acceleration: f64,
}

#[derive(Clone, Debug)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    pub parent: String,
    pub child: String,
    pub origin: Pose,
    pub axis: Vector3<f64>,
    pub limits: Vec<DofLimits>,
    pub(crate) offset: usize,
}

impl Joint {
    /// Index of this joint's first coordinate in the configuration vector.
    pub fn dof_offset(&self) -> usize {
        self.offset
    }
}

#[derive(Clone, Debug)]
pub struct GripperFrame {
    pub link: String,
    pub offset: Pose,
}

/// Kinematic tree with a single gripper frame. Immutable once built.
#[derive(Clone, Debug)]
pub struct RobotModel {
    joints: Vec<Joint>,
    gripper: GripperFrame,
    chain: Vec<usize>,
    dof: usize,
    root: String,
    limits: Vec<DofLimits>,
}

// ---- file schema ----

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq)]
pub struct PoseRecord {
    #[serde(default)]
    pub p: [f64; 3],
    #[serde(default = "identity_quat")]
    pub q: [f64; 4],
}

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl Default for PoseRecord {
    fn default() -> Self {
        Self {
            p: [0.0; 3],
            q: identity_quat(),
        }
    }
}

impl PoseRecord {
    pub fn from_pose(pose: &Pose) -> Self {
        let t = pose.translation();
        Self {
            p: [t.x, t.y, t.z],
            q: pose.quaternion_wxyz(),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug)]
struct LimitRecord {
    #[serde(default)]
    q: Option<[f64; 2]>,
    v: f64,
    a: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(untagged)]
enum LimitSpec {
    Shared(LimitRecord),
    PerDof(Vec<LimitRecord>),
}

#[derive(Serialize, Deserialize, Clone, Debug)]
struct JointRecord {
    name: String,
    kind: JointKind,
    parent: String,
    child: String,
    #[serde(default)]
    origin: PoseRecord,
    #[serde(default)]
    axis: Option<[f64; 3]>,
    #[serde(default)]
    limits: Option<LimitSpec>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
struct GripperRecord {
    link: String,
    #[serde(default)]
    offset: PoseRecord,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
struct ModelRecord {
    joints: Vec<JointRecord>,
    gripper: GripperRecord,
}

fn invalid(msg: impl Into<String>) -> KinematicsError {
    KinematicsError::InvalidModel(msg.into())
}

fn pose_from_record(r: &PoseRecord, what: &str) -> Result<Pose, KinematicsError> {
    Pose::from_parts(r.p, r.q).map_err(|e| invalid(format!("{what}: {e}")))
}

impl RobotModel {
    pub fn from_json_str(text: &str) -> Result<Self, KinematicsError> {
        let rec: ModelRecord = serde_json::from_str(text)?;
        let gripper = GripperFrame {
            link: rec.gripper.link.clone(),
            offset: pose_from_record(&rec.gripper.offset, "gripper offset")?,
        };
        let mut joints = Vec::with_capacity(rec.joints.len());
        for j in &rec.joints {
            let dof = j.kind.dof();
            let limits = match (&j.limits, dof) {
                (_, 0) => Vec::new(),
                (None, _) => return Err(invalid(format!("joint {}: missing limits", j.name))),
                (Some(LimitSpec::Shared(l)), n) => vec![limit_from_record(l); n],
                (Some(LimitSpec::PerDof(ls)), n) => {
                    if ls.len() != n {
                        return Err(invalid(format!(
                            "joint {}: {} limit entries for {} DOF",
                            j.name,
                            ls.len(),
                            n
                        )));
                    }
                    ls.iter().map(limit_from_record).collect()
                }
            };
            let axis = j
                .axis
                .map(|a| Vector3::new(a[0], a[1], a[2]))
                .unwrap_or_else(Vector3::z);
            joints.push(Joint {
                name: j.name.clone(),
                kind: j.kind,
                parent: j.parent.clone(),
                child: j.child.clone(),
                origin: pose_from_record(&j.origin, &format!("joint {} origin", j.name))?,
                axis,
                limits,
                offset: 0,
            });
        }
        Self::new(joints, gripper)
    }

    pub fn from_json_file(path: &Path) -> Result<Self, KinematicsError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let rec = ModelRecord {
            joints: self
                .joints
                .iter()
                .map(|j| JointRecord {
                    name: j.name.clone(),
                    kind: j.kind,
                    parent: j.parent.clone(),
                    child: j.child.clone(),
                    origin: PoseRecord::from_pose(&j.origin),
                    axis: Some([j.axis.x, j.axis.y, j.axis.z]),
                    limits: (j.kind.dof() > 0).then(|| {
                        LimitSpec::PerDof(
                            j.limits
                                .iter()
                                .map(|l| LimitRecord {
                                    q: l.position.map(|(lo, hi)| [lo, hi]),
                                    v: l.velocity,
                                    a: l.acceleration,
                                })
                                .collect(),
                        )
                    }),
                })
                .collect(),
            gripper: GripperRecord {
                link: self.gripper.link.clone(),
                offset: PoseRecord::from_pose(&self.gripper.offset),
            },
        };
        serde_json::to_string_pretty(&rec).expect("model serializes")
    }

    /// Validates the tree and assigns configuration offsets in joint order.
    pub fn new(mut joints: Vec<Joint>, gripper: GripperFrame) -> Result<Self, KinematicsError> {
        let mut names = HashSet::new();
        let mut child_to_joint: HashMap<&str, usize> = HashMap::new();
        for (i, j) in joints.iter().enumerate() {
            if !names.insert(j.name.as_str()) {
                return Err(invalid(format!("duplicate joint name {}", j.name)));
            }
            if child_to_joint.insert(j.child.as_str(), i).is_some() {
                return Err(invalid(format!("link {} has two parent joints", j.child)));
            }
            if j.parent == j.child {
                return Err(invalid(format!(
                    "joint {} connects a link to itself",
                    j.name
                )));
            }
            if j.limits.len() != j.kind.dof() {
                return Err(invalid(format!("joint {}: limit count mismatch", j.name)));
            }
            if matches!(j.kind, JointKind::Revolute | JointKind::Prismatic) && j.axis.norm() < 1e-12
            {
                return Err(invalid(format!("joint {}: zero axis", j.name)));
            }
            for (k, l) in j.limits.iter().enumerate() {
                if [l.velocity, l.acceleration]
                    .iter()
                    .any(|v| v.partial_cmp(&0.0) != Some(Ordering::Greater))
                {
                    return Err(invalid(format!(
                        "joint {}: velocity and acceleration limits must be positive",
                        j.name
                    )));
                }
                if let Some((lo, hi)) = l.position {
                    if lo.partial_cmp(&hi) != Some(Ordering::Less) {
                        return Err(invalid(format!(
                            "joint {}: position limits need lo < hi",
                            j.name
                        )));
                    }
                    if j.kind == JointKind::Floating && k >= 3 {
                        return Err(invalid(format!(
                            "joint {}: rotational floating-base coordinates cannot carry position limits",
                            j.name
                        )));
                    }
                }
            }
        }
        let roots: HashSet<&str> = joints
            .iter()
            .map(|j| j.parent.as_str())
            .filter(|p| !child_to_joint.contains_key(p))
            .collect();
        let root = match (roots.len(), joints.is_empty()) {
            (_, true) => gripper.link.clone(),
            (1, false) => roots.into_iter().next().unwrap_or_default().to_string(),
            (n, false) => {
                return Err(invalid(format!(
                    "kinematic tree must have exactly one root link, found {n}"
                )))
            }
        };

        // Walk from the gripper link to the root; every link must reach it.
        for j in &joints {
            let mut link = j.child.as_str();
            let mut steps = 0;
            while let Some(&idx) = child_to_joint.get(link) {
                link = joints[idx].parent.as_str();
                steps += 1;
                if steps > joints.len() {
                    return Err(invalid("kinematic tree contains a cycle"));
                }
            }
        }
        let mut chain = Vec::new();
        let mut link = gripper.link.as_str();
        while let Some(&idx) = child_to_joint.get(link) {
            chain.push(idx);
            link = joints[idx].parent.as_str();
        }
        if link != root {
            return Err(invalid(format!(
                "gripper link {} is not in the tree",
                gripper.link
            )));
        }
        chain.reverse();

        let mut offset = 0;
        let mut limits = Vec::new();
        for j in joints.iter_mut() {
            j.offset = offset;
            if matches!(j.kind, JointKind::Revolute | JointKind::Prismatic) {
                j.axis = j.axis.normalize();
            }
            offset += j.kind.dof();
            limits.extend_from_slice(&j.limits);
        }
        Ok(Self {
            joints,
            gripper,
            chain,
            dof: offset,
            root,
            limits,
        })
    }

    /// Total number of degrees of freedom.
    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn gripper(&self) -> &GripperFrame {
        &self.gripper
    }

    pub fn root_link(&self) -> &str {
        &self.root
    }

    /// Joint indices from the root to the gripper link.
    pub fn chain(&self) -> &[usize] {
        &self.chain
    }

    pub fn limits(&self) -> &[DofLimits] {
        &self.limits
    }

    /// Same kinematics with every velocity limit multiplied by `factor`.
    pub fn with_velocity_scale(&self, factor: f64) -> Result<Self, KinematicsError> {
        let mut joints = self.joints.clone();
        for j in &mut joints {
            for l in &mut j.limits {
                l.velocity *= factor;
            }
        }
        Self::new(joints, self.gripper.clone())
    }

    pub fn check_dim(&self, v: &DVector<f64>) -> Result<(), KinematicsError> {
        if v.len() != self.dof {
            return Err(KinematicsError::DimensionMismatch {
                expected: self.dof,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Whether each coordinate is a floating-base rotation component.
    pub fn rotational_floating_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.dof];
        for j in &self.joints {
            if j.kind == JointKind::Floating {
                for m in &mut mask[j.offset + 3..j.offset + 6] {
                    *m = true;
                }
            }
        }
        mask
    }

    /// Clamps bounded coordinates into their position limits.
    pub fn clamp_to_limits(&self, q: &mut DVector<f64>) {
        for (v, l) in q.iter_mut().zip(&self.limits) {
            if let Some((lo, hi)) = l.position {
                *v = v.clamp(lo, hi);
            }
        }
    }

    /// Coordinates outside their limits by more than `tol`.
    pub fn limit_violations(&self, q: &DVector<f64>, tol: f64) -> Vec<usize> {
        q.iter()
            .zip(&self.limits)
            .enumerate()
            .filter_map(|(i, (v, l))| match l.position {
                Some((lo, hi)) if *v < lo - tol || *v > hi + tol => Some(i),
                _ => None,
            })
            .collect()
    }
}

fn limit_from_record(l: &LimitRecord) -> DofLimits {
    DofLimits {
        position: l.q.map(|[lo, hi]| (lo, hi)),
        velocity: l.v,
        acceleration: l.a,
    }
}

/// Finite configuration and velocity of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl JointState {
    pub fn new(
        model: &RobotModel,
        q: DVector<f64>,
        qdot: DVector<f64>,
    ) -> Result<Self, KinematicsError> {
        model.check_dim(&q)?;
        model.check_dim(&qdot)?;
        if q.iter().chain(qdot.iter()).any(|v| !v.is_finite()) {
            return Err(KinematicsError::NonFinite);
        }
        Ok(Self { q, qdot })
    }

    pub fn at_rest(model: &RobotModel, q: DVector<f64>) -> Result<Self, KinematicsError> {
        let n = model.dof();
        Self::new(model, q, DVector::zeros(n))
    }
}
