use super::{GeomError, Mat3, Quat, Vec3};

/// Rotation followed by translation: `p -> rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

const ROTATION_TOL: f64 = 1e-9;

impl RigidTransform {
    /// Checks `det = +1` and `R^T R = I` within 1e-9.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, GeomError> {
        let gram = rotation.transpose() * rotation - Mat3::identity();
        if gram.abs().max() > ROTATION_TOL || (rotation.determinant() - 1.0).abs() > ROTATION_TOL {
            return Err(GeomError::NotRotation);
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_parts_unchecked(rotation: Mat3, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::from_parts_unchecked(Mat3::identity(), Vec3::zeros())
    }

    pub fn from_axis_angle(omega: &Vec3, translation: &Vec3) -> Self {
        Self::from_parts_unchecked(Quat::from_axis_angle(omega).to_rotation_matrix(), *translation)
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self::from_parts_unchecked(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::from_parts_unchecked(rt, -(rt * self.translation))
    }
}
