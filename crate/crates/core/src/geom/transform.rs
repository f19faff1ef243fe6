//! Rigid transforms stored as an explicit rotation matrix plus translation.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Element of SE(3): `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a transform, checking that `rotation` is a proper rotation within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let t = Self {
            rotation,
            translation,
        };
        if !t.is_valid(1e-9) {
            return Err(Error::InvalidArgument(
                "rotation is not orthonormal with det 1".into(),
            ));
        }
        Ok(t)
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Self {
            rotation,
            translation: Vec3::zeros(),
        }
    }

    /// Rotation by `angle` radians about the z axis.
    pub fn rot_z(angle: f64) -> Self {
        Self::from_rotation(*Rotation3::from_axis_angle(&Vec3::z_axis(), angle).matrix())
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_rotation(*Rotation3::from_axis_angle(&Vec3::x_axis(), angle).matrix())
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_rotation(*Rotation3::from_axis_angle(&Vec3::y_axis(), angle).matrix())
    }

    /// `yaw ∘ roll ∘ pitch`, i.e. `Rz(yaw) Rx(roll) Ry(pitch)`, plus a translation.
    pub fn from_yaw_roll_pitch(yaw: f64, roll: f64, pitch: f64, translation: Vec3) -> Self {
        let r = Self::rot_z(yaw).rotation * Self::rot_x(roll).rotation * Self::rot_y(pitch).rotation;
        Self {
            rotation: r,
            translation,
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_all(&self, pts: &[Vec3]) -> Vec<Vec3> {
        pts.iter().map(|p| self.apply(p)).collect()
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in radians of the rotational part.
    pub fn angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let rtr = self.rotation.transpose() * self.rotation - Matrix3::identity();
        rtr.iter().all(|v| v.abs() <= tol)
            && (self.rotation.determinant() - 1.0).abs() <= tol
            && self.rotation.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
    }

    /// Re-orthonormalizes the rotation (nearest rotation in Frobenius norm).
    pub fn orthonormalized(&self) -> RigidTransform {
        let rot = Rotation3::from_matrix_eps(&self.rotation, 1e-12, 100, Rotation3::identity());
        RigidTransform {
            rotation: *rot.matrix(),
            translation: self.translation,
        }
    }

    /// Row-major rotation (9 values) followed by the translation (3 values).
    pub fn to_row_major(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = self.rotation[(r, c)];
            }
            out[9 + r] = self.translation[r];
        }
        out
    }

    pub fn from_row_major(v: &[f64; 12]) -> RigidTransform {
        let rotation = Matrix3::from_row_slice(&v[..9]);
        RigidTransform {
            rotation,
            translation: Vec3::new(v[9], v[10], v[11]),
        }
    }
}

impl Serialize for RigidTransform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = <[f64; 12]>::deserialize(d)?;
        Ok(RigidTransform::from_row_major(&v))
    }
}

impl std::ops::Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            -3.2..3.2f64,
            -1.5..1.5f64,
            -1.5..1.5f64,
            prop::array::uniform3(-50.0..50.0f64),
        )
            .prop_map(|(y, r, p, t)| {
                RigidTransform::from_yaw_roll_pitch(y, r, p, Vec3::new(t[0], t[1], t[2]))
            })
    }

    proptest! {
        #[test]
        fn compose_with_inverse_is_identity(t in arb_transform()) {
            let id = t.compose(&t.inverse());
            for (a, b) in id.rotation.iter().zip(Matrix3::<f64>::identity().iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            prop_assert!(id.translation.norm() < 1e-9);
            prop_assert!(t.is_valid(1e-9));
        }

        #[test]
        fn row_major_roundtrip(t in arb_transform()) {
            prop_assert_eq!(RigidTransform::from_row_major(&t.to_row_major()), t);
        }
    }

    #[test]
    fn composition_order() {
        let a = RigidTransform::from_translation(Vec3::new(1.0, 0.0, 0.0));
        let b = RigidTransform::rot_z(std::f64::consts::FRAC_PI_2);
        // b first, then a
        let p = (a * b).apply(&Vec3::new(1.0, 0.0, 0.0));
        assert!((p - Vec3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_rotation() {
        let m = Matrix3::new(2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(m, Vec3::zeros()).is_err());
        let reflect = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(reflect, Vec3::zeros()).is_err());
    }
}
