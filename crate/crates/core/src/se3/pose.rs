use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3};

use super::Se3Error;

/// Rigid transform: rotation followed by translation, `x ↦ R x + t`.
///
/// The quaternion is kept unit-norm and on the `w ≥ 0` hemisphere so that two
/// equal rotations always serialize identically.
#[derive(Clone, Copy, PartialEq)]
pub struct Pose {
    translation: Vector3<f64>,
    rotation: UnitQuaternion<f64>,
}

impl fmt::Debug for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.rotation.quaternion();
        write!(
            f,
            "Pose(p: [{}, {}, {}], q: [{}, {}, {}, {}])",
            self.translation.x, self.translation.y, self.translation.z, q.w, q.i, q.j, q.k
        )
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let raw = q.into_inner();
    let raw = if raw.w < 0.0 { -raw } else { raw };
    // leave already-unit quaternions bit-identical
    if (raw.norm_squared() - 1.0).abs() <= 4.0 * f64::EPSILON {
        UnitQuaternion::new_unchecked(raw)
    } else {
        UnitQuaternion::new_normalize(raw)
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn new(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self {
            translation,
            rotation: canonical(rotation),
        }
    }

    /// Builds a pose from a scalar-first quaternion. The quaternion is normalized;
    /// a zero or non-finite quaternion is rejected.
    pub fn from_parts(p: [f64; 3], q_wxyz: [f64; 4]) -> Result<Self, Se3Error> {
        let quat = Quaternion::new(q_wxyz[0], q_wxyz[1], q_wxyz[2], q_wxyz[3]);
        let norm = quat.norm();
        if !norm.is_finite() || norm < 1e-12 || p.iter().any(|v| !v.is_finite()) {
            return Err(Se3Error::InvalidPose);
        }
        Ok(Self::new(
            Vector3::new(p[0], p[1], p[2]),
            UnitQuaternion::new_unchecked(quat),
        ))
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(t, UnitQuaternion::identity())
    }

    /// Rotation given as a rotation vector (axis times angle).
    pub fn from_rotation_vector(t: Vector3<f64>, rotvec: Vector3<f64>) -> Self {
        Self::new(t, exp_so3(&rotvec))
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// Scalar-first quaternion coefficients.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `self ∘ other`: first `other`, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.translation + self.rotation * other.translation,
            self.rotation * other.rotation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose::new(-(inv * self.translation), inv)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.translation + self.rotation * p
    }

    /// Frame-local increment from `self` to `later`.
    ///
    /// Fails when the relative rotation is a half turn, where the rotation
    /// vector has two equally short representatives.
    pub fn difference(&self, later: &Pose) -> Result<DifferentialPose, Se3Error> {
        let inv = self.rotation.inverse();
        let rel = canonical(inv * later.rotation);
        let drotation = log_so3(&rel);
        if PI - drotation.norm() <= HALF_TURN_TOL {
            return Err(Se3Error::HalfTurn);
        }
        Ok(DifferentialPose {
            dtranslation: inv * (later.translation - self.translation),
            drotation,
        })
    }

    /// Applies a frame-local increment; exact inverse of [`Pose::difference`].
    pub fn apply(&self, d: &DifferentialPose) -> Pose {
        Pose::new(
            self.translation + self.rotation * d.dtranslation,
            self.rotation * exp_so3(&d.drotation),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
    }
}

const HALF_TURN_TOL: f64 = 1e-12;

/// Frame-local SE(3) increment: translation in the earlier frame plus the
/// rotation vector of the relative rotation.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct DifferentialPose {
    pub dtranslation: Vector3<f64>,
    pub drotation: Vector3<f64>,
}

impl DifferentialPose {
    pub fn new(dtranslation: Vector3<f64>, drotation: Vector3<f64>) -> Self {
        Self {
            dtranslation,
            drotation,
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// `[dtx, dty, dtz, drx, dry, drz]`.
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.dtranslation.x,
            self.dtranslation.y,
            self.dtranslation.z,
            self.drotation.x,
            self.drotation.y,
            self.drotation.z,
        ]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self::new(
            Vector3::new(v[0], v[1], v[2]),
            Vector3::new(v[3], v[4], v[5]),
        )
    }
}

/// Exponential map of so(3).
pub fn exp_so3(rotvec: &Vector3<f64>) -> UnitQuaternion<f64> {
    let theta = rotvec.norm();
    let half = 0.5 * theta;
    // sin(θ/2)/θ, series below the cancellation threshold
    let k = if theta < 1e-6 {
        0.5 - theta * theta / 48.0
    } else {
        half.sin() / theta
    };
    UnitQuaternion::new_normalize(Quaternion::new(
        half.cos(),
        k * rotvec.x,
        k * rotvec.y,
        k * rotvec.z,
    ))
}

/// Principal logarithm of SO(3), angle in `[0, π]`.
pub fn log_so3(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let q = canonical(*q);
    let w = q.w;
    let v = q.imag();
    let s = v.norm();
    if s < 1e-10 {
        // 2 atan2(s, w)/s → 2/w (1 - s²/(3w²))
        v * (2.0 / w) * (1.0 - s * s / (3.0 * w * w))
    } else {
        v * (2.0 * s.atan2(w) / s)
    }
}

pub fn log_rotation_matrix(r: &Matrix3<f64>) -> Vector3<f64> {
    let rot = Rotation3::from_matrix_unchecked(*r);
    log_so3(&UnitQuaternion::from_rotation_matrix(&rot))
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Root-frame 6-vector error `(t_target − t_current, log(R_target R_currentᵀ))`.
pub fn pose_error(target: &Pose, current: &Pose) -> [f64; 6] {
    let dt = target.translation() - current.translation();
    let dr = log_so3(&(target.rotation() * current.rotation().inverse()));
    [dt.x, dt.y, dt.z, dr.x, dr.y, dr.z]
}

/// Picks the rotation-vector representative of the same rotation closest to `reference`.
///
/// Representatives of a rotation `θ·n` are `(θ + 2πk)·n` for integer `k`.
pub fn unwrap_rotation_vector(rotvec: &Vector3<f64>, reference: &Vector3<f64>) -> Vector3<f64> {
    let theta = rotvec.norm();
    if theta < 1e-12 {
        // Identity: representatives 2πk·n for any axis n; the nearest nonzero one
        // is only closer than zero when the reference is already beyond π.
        let rn = reference.norm();
        if rn <= PI {
            return *rotvec;
        }
        let axis = reference / rn;
        let k = (rn / (2.0 * PI)).round();
        return axis * (2.0 * PI * k);
    }
    let axis = rotvec / theta;
    let along = reference.dot(&axis);
    let k0 = ((along - theta) / (2.0 * PI)).round();
    let mut best = *rotvec;
    let mut best_dist = f64::INFINITY;
    for k in [k0 - 1.0, k0, k0 + 1.0] {
        let cand = axis * (theta + 2.0 * PI * k);
        let dist = (cand - reference).norm();
        if dist < best_dist {
            best_dist = dist;
            best = cand;
        }
    }
    best
}
