use core::ops::Mul;

use super::{GeomError, Quat, RigidTransform, Vec3};

/// Unit dual quaternion `real + eps * dual` encoding a rigid motion.
///
/// `real` is the rotation; `dual = 0.5 * (0, t) * real` carries the
/// translation `t`. Applied to a point: `p -> real.rotate(p) + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualQuaternion {
    pub real: Quat,
    pub dual: Quat,
}

impl Default for DualQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl DualQuaternion {
    pub const IDENTITY: DualQuaternion = DualQuaternion {
        real: Quat::IDENTITY,
        dual: Quat::ZERO,
    };

    pub fn from_rotation_translation(rotation: Quat, translation: &Vec3) -> Self {
        Self {
            real: rotation,
            dual: (Quat::pure(translation) * rotation).scale(0.5),
        }
    }

    pub fn from_translation(translation: &Vec3) -> Self {
        Self::from_rotation_translation(Quat::IDENTITY, translation)
    }

    pub fn from_transform(t: &RigidTransform) -> Self {
        let q = Quat::from_rotation_matrix(&t.rotation);
        Self::from_rotation_translation(q, &t.translation).canonicalize()
    }

    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform::from_parts_unchecked(self.real.to_rotation_matrix(), self.translation())
    }

    pub fn to_array(&self) -> [f64; 8] {
        let r = self.real;
        let d = self.dual;
        [r.w, r.x, r.y, r.z, d.w, d.x, d.y, d.z]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            real: Quat::new(a[0], a[1], a[2], a[3]),
            dual: Quat::new(a[4], a[5], a[6], a[7]),
        }
    }

    pub fn translation(&self) -> Vec3 {
        (self.dual * self.real.conjugate()).vector() * 2.0
    }

    /// Rigid motion of `p`.
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.real.rotate(p) + self.translation()
    }

    /// Rotation-only action, for directions and normals.
    pub fn rotate_vector(&self, v: &Vec3) -> Vec3 {
        self.real.rotate(v)
    }

    /// Inverse of a unit dual quaternion.
    pub fn inverse(&self) -> Self {
        Self {
            real: self.real.conjugate(),
            dual: self.dual.conjugate(),
        }
    }

    /// Restores `|real| = 1` and `real . dual = 0`.
    ///
    /// Both parts are divided by `|real|`, then the component of `dual`
    /// along `real` is removed.
    pub fn normalize(&self) -> Self {
        let inv = 1.0 / self.real.norm();
        let real = self.real.scale(inv);
        let dual = self.dual.scale(inv);
        let dual = dual - real.scale(real.dot(&dual));
        Self { real, dual }
    }

    /// Picks the representative with `real.w >= 0`; on a tie the first
    /// non-zero vector component of `real` is made positive.
    pub fn canonicalize(&self) -> Self {
        let r = self.real;
        let flip = if r.w != 0.0 {
            r.w < 0.0
        } else if r.x != 0.0 {
            r.x < 0.0
        } else if r.y != 0.0 {
            r.y < 0.0
        } else {
            r.z < 0.0
        };
        if flip {
            Self {
                real: -self.real,
                dual: -self.dual,
            }
        } else {
            *self
        }
    }

    /// Sign of `real . reference.real`, +1 on a tie.
    pub fn hemisphere_sign(&self, reference: &DualQuaternion) -> f64 {
        if self.real.dot(&reference.real) < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    /// Both unit-length and orthogonality constraints hold within `tol`.
    pub fn is_unit(&self, tol: f64) -> bool {
        (self.real.norm() - 1.0).abs() <= tol && self.real.dot(&self.dual).abs() <= tol
    }

    /// Weighted dual-quaternion blend.
    ///
    /// Inputs are sign-aligned to the hemisphere of the first element, summed
    /// with their weights and renormalized.
    pub fn blend(dqs: &[DualQuaternion], weights: &[f64]) -> Result<Self, GeomError> {
        if dqs.len() != weights.len() {
            return Err(GeomError::LengthMismatch {
                dqs: dqs.len(),
                weights: weights.len(),
            });
        }
        Self::blend_iter(dqs.iter().copied().zip(weights.iter().copied()))
    }

    /// Allocation-free form of [`DualQuaternion::blend`].
    pub fn blend_iter<I>(items: I) -> Result<Self, GeomError>
    where
        I: IntoIterator<Item = (DualQuaternion, f64)>,
    {
        let mut reference: Option<DualQuaternion> = None;
        let mut real = Quat::ZERO;
        let mut dual = Quat::ZERO;
        let mut total = 0.0;
        for (dq, w) in items {
            if w < 0.0 {
                return Err(GeomError::NegativeWeight(w));
            }
            let reference = *reference.get_or_insert(dq);
            let s = w * dq.hemisphere_sign(&reference);
            real = real + dq.real.scale(s);
            dual = dual + dq.dual.scale(s);
            total += w;
        }
        if !(total > 0.0) || real.norm_squared() == 0.0 {
            return Err(GeomError::AllZeroWeights);
        }
        Ok(DualQuaternion { real, dual }.normalize())
    }
}

/// Composition: `(a * b).apply(p) == a.apply(&b.apply(p))`.
impl Mul for DualQuaternion {
    type Output = DualQuaternion;
    fn mul(self, o: DualQuaternion) -> DualQuaternion {
        DualQuaternion {
            real: self.real * o.real,
            dual: self.real * o.dual + self.dual * o.real,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Mat3;
    use approx::assert_relative_eq;
    use core::f64::consts::{FRAC_PI_2, PI};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dq(rng: &mut ChaCha8Rng) -> DualQuaternion {
        let omega = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let t = Vec3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        DualQuaternion::from_rotation_translation(Quat::from_axis_angle(&omega), &t)
    }

    #[test]
    fn apply_identity() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(DualQuaternion::IDENTITY.apply(&p), p);
    }

    #[test]
    fn apply_translation() {
        let dq = DualQuaternion::from_translation(&Vec3::new(0.0, 0.0, 5.0));
        assert_relative_eq!(dq.apply(&Vec3::new(1.0, 2.0, 3.0)), Vec3::new(1.0, 2.0, 8.0), epsilon = 1e-15);
    }

    #[test]
    fn apply_quarter_turn() {
        let dq = DualQuaternion::from_rotation_translation(
            Quat::from_axis_angle(&Vec3::new(0.0, 0.0, FRAC_PI_2)),
            &Vec3::zeros(),
        );
        assert_relative_eq!(dq.apply(&Vec3::x()), Vec3::y(), epsilon = 1e-15);
    }

    #[test]
    fn apply_preserves_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let dq = random_dq(&mut rng);
            let p = Vec3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(0.0..300.0));
            let q = Vec3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(0.0..300.0));
            let before = (p - q).norm();
            let after = (dq.apply(&p) - dq.apply(&q)).norm();
            assert!((after - before).abs() < 1e-9 * before.max(1.0));
        }
    }

    #[test]
    fn blend_single_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_dq(&mut rng);
        let one = DualQuaternion::blend(&[d], &[1.0]).unwrap();
        assert_relative_eq!(&one.to_array()[..], &d.to_array()[..], epsilon = 1e-14);
        let two = DualQuaternion::blend(&[d, d], &[0.5, 0.5]).unwrap();
        assert_relative_eq!(&two.to_array()[..], &d.to_array()[..], epsilon = 1e-14);
        // sign-flipped copy of the same motion blends to the same motion
        let flipped = DualQuaternion { real: -d.real, dual: -d.dual };
        let mixed = DualQuaternion::blend(&[d, flipped], &[0.3, 0.7]).unwrap();
        assert_relative_eq!(&mixed.to_array()[..], &d.to_array()[..], epsilon = 1e-14);
    }

    #[test]
    fn blend_of_translations_is_linear() {
        let a = DualQuaternion::from_translation(&Vec3::new(0.0, 0.0, 2.0));
        let b = DualQuaternion::from_translation(&Vec3::new(0.0, 0.0, 4.0));
        let m = DualQuaternion::blend(&[a, b], &[0.5, 0.5]).unwrap();
        assert_relative_eq!(m.translation(), Vec3::new(0.0, 0.0, 3.0), epsilon = 1e-15);
        assert_relative_eq!(m.apply(&Vec3::zeros()), Vec3::new(0.0, 0.0, 3.0), epsilon = 1e-15);
    }

    #[test]
    fn blend_rejects_zero_and_negative_weights() {
        let d = DualQuaternion::IDENTITY;
        assert_eq!(DualQuaternion::blend(&[d, d], &[0.0, 0.0]), Err(GeomError::AllZeroWeights));
        assert_eq!(DualQuaternion::blend(&[d], &[-1.0]), Err(GeomError::NegativeWeight(-1.0)));
        assert!(matches!(DualQuaternion::blend(&[d], &[]), Err(GeomError::LengthMismatch { .. })));
    }

    #[test]
    fn blend_output_is_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let dqs: alloc::vec::Vec<_> = (0..4).map(|_| random_dq(&mut rng)).collect();
            let mut w: alloc::vec::Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            let b = DualQuaternion::blend(&dqs, &w).unwrap();
            assert!(b.is_unit(1e-9));
        }
    }

    #[test]
    fn transform_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let omega = Vec3::new(rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(-PI..PI));
            let t = RigidTransform::from_axis_angle(
                &omega,
                &Vec3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)),
            );
            let back = DualQuaternion::from_transform(&t).to_transform();
            for (a, b) in back.rotation.iter().zip(t.rotation.iter()) {
                assert!((a - b).abs() < 1e-9);
            }
            for (a, b) in back.translation.iter().zip(t.translation.iter()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identity_transform_gives_identity() {
        assert_eq!(DualQuaternion::from_transform(&RigidTransform::identity()), DualQuaternion::IDENTITY);
    }

    #[test]
    fn half_turn_about_x_canonical_form() {
        let r = Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
        let t = RigidTransform::new(r, Vec3::zeros()).unwrap();
        let dq = DualQuaternion::from_transform(&t);
        assert_eq!(dq.real, Quat::new(0.0, 1.0, 0.0, 0.0));
        let neg = DualQuaternion { real: -dq.real, dual: -dq.dual }.canonicalize();
        assert_eq!(neg.real, Quat::new(0.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn composition_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_dq(&mut rng);
        let b = random_dq(&mut rng);
        let p = Vec3::new(3.0, -1.0, 7.0);
        assert_relative_eq!((a * b).apply(&p), a.apply(&b.apply(&p)), epsilon = 1e-10);
        assert_relative_eq!((a * a.inverse()).apply(&p), p, epsilon = 1e-10);
    }
}
