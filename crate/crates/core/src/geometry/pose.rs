use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use super::GeometryError;

/// A rigid-body transform stored as a rotation matrix and a translation.
///
/// Poses named `pose_cw` map world points into a camera frame. The
/// transform applied to a point is `rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

const ORTHONORMAL_TOL: f64 = 1e-9;

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose after checking that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let ortho_err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if !ortho_err.is_finite()
            || ortho_err > ORTHONORMAL_TOL
            || (det - 1.0).abs() > ORTHONORMAL_TOL
            || !translation.iter().all(|v| v.is_finite())
        {
            return Err(GeometryError::InvalidRotation { ortho_err, det });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        Self {
            rotation: *r.matrix(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::x(), angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::y(), angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::z(), angle)
    }

    /// Builds a pose from a (possibly unnormalized) quaternion `(qx, qy, qz, qw)`.
    pub fn from_quaternion(
        translation: Vector3<f64>,
        qx: f64,
        qy: f64,
        qz: f64,
        qw: f64,
    ) -> Result<Self, GeometryError> {
        let q = Quaternion::new(qw, qx, qy, qz);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(GeometryError::InvalidQuaternion);
        }
        let unit = UnitQuaternion::from_quaternion(q);
        Self::new(*unit.to_rotation_matrix().matrix(), translation)
    }

    /// Rotation as `(qx, qy, qz, qw)` with `qw >= 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let (mut x, mut y, mut z, mut w) = (q.i, q.j, q.k, q.w);
        if w < 0.0 {
            x = -x;
            y = -y;
            z = -z;
            w = -w;
        }
        [x, y, z, w]
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation.transpose();
        PoseSE3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Largest elementwise difference between the two transforms.
    pub fn max_abs_diff(&self, other: &PoseSE3) -> f64 {
        let r = (self.rotation - other.rotation).abs().max();
        let t = (self.translation - other.translation).abs().max();
        r.max(t)
    }
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}
