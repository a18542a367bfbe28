//! Rigid-motion arithmetic, the pinhole camera and small dense solves.
//!
//! Quaternions are stored scalar-first, `(w, x, y, z)`, and follow the
//! Hamilton product. A unit quaternion `q` rotates a vector `v` as
//! `q * (0, v) * conj(q)`, which is a right-handed rotation by `2 acos(w)`
//! about `(x, y, z)`. Every conversion in this module uses that convention.

mod camera;
mod cholesky;
mod dual_quat;
mod quat;
mod transform;

pub use camera::PinholeCamera;
pub use cholesky::cholesky_solve;
pub use dual_quat::DualQuaternion;
pub use quat::Quat;
pub use transform::RigidTransform;

/// Point or direction in scene units (mm).
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 matrix, mostly rotations.
pub type Mat3 = nalgebra::Matrix3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum GeomError {
    #[error("every blend weight is zero")]
    AllZeroWeights,
    #[error("blend weight {0} is negative")]
    NegativeWeight(f64),
    #[error("{dqs} dual quaternions but {weights} weights")]
    LengthMismatch { dqs: usize, weights: usize },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidCamera(&'static str),
    #[error("matrix is not a proper rotation")]
    NotRotation,
}

/// Skew-symmetric cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
