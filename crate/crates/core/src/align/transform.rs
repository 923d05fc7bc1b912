use nalgebra::{Matrix3, Matrix4, Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Proper rigid motion `x -> R x + t` (no reflection, no scaling).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RigidRepr<T>", into = "RigidRepr<T>")]
pub struct RigidTransform<T: Real> {
    rotation: Matrix3<T>,
    translation: Vector3<T>,
}

/// Row-major rotation as it appears in JSON.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigidRepr<T> {
    rotation: [[T; 3]; 3],
    translation_mm: [T; 3],
}

impl<T: Real> From<RigidRepr<T>> for RigidTransform<T> {
    fn from(r: RigidRepr<T>) -> Self {
        let m = r.rotation;
        Self {
            rotation: Matrix3::new(m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2]),
            translation: Vector3::from(r.translation_mm),
        }
    }
}

impl<T: Real> From<RigidTransform<T>> for RigidRepr<T> {
    fn from(t: RigidTransform<T>) -> Self {
        let r = t.rotation;
        Self {
            rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
            translation_mm: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl<T: Real> Default for RigidTransform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Checks `R^T R = I` and `det R = +1` to within `1e-6`.
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self> {
        let tol = T::lit(1e-6);
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        let det = rotation.determinant();
        if !(ortho <= tol) || !((det - T::one()).abs() <= tol) {
            return Err(Error::InvalidParameter(format!(
                "not a proper rotation (|R^T R - I| = {}, det = {})",
                ortho, det
            )));
        }
        Ok(Self { rotation, translation })
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(t: Vector3<T>) -> Self {
        Self { rotation: Matrix3::identity(), translation: t }
    }

    /// Intrinsic x-y-z Euler angles in degrees: `R = Rx(a) Ry(b) Rz(c)`.
    pub fn from_euler_deg(angles: [T; 3], translation: Vector3<T>) -> Self {
        let rad = |d: T| d * T::pi() / T::lit(180.0);
        let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), rad(angles[0]));
        let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), rad(angles[1]));
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), rad(angles[2]));
        Self { rotation: (rx * ry * rz).into_inner(), translation }
    }

    /// Rotation about `pivot` followed by `translation`:
    /// `x -> R (x - pivot) + pivot + translation`.
    pub fn about(rotation: Matrix3<T>, pivot: &Point3<T>, translation: Vector3<T>) -> Result<Self> {
        Self::new(rotation, pivot.coords - rotation * pivot.coords + translation)
    }

    #[inline]
    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    #[inline]
    pub fn apply(&self, p: &Point3<T>) -> Point3<T> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    #[inline]
    pub fn apply_vector(&self, v: &Vector3<T>) -> Vector3<T> {
        self.rotation * v
    }

    /// `self.compose(other)` applies `other` first: `(self ∘ other)(x) = self(other(x))`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn to_homogeneous(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn rotation_angle(&self) -> T {
        rotation_distance(&self.rotation, &Matrix3::identity())
    }
}

/// Geodesic distance between two rotations, in radians.
///
/// Uses `2 asin(|R1 - R2|_F / (2 sqrt 2))`, which stays accurate for tiny
/// angles where the trace formula loses all precision.
pub fn rotation_distance<T: Real>(a: &Matrix3<T>, b: &Matrix3<T>) -> T {
    let s = (a - b).norm() / (T::lit(2.0) * T::lit(2.0).sqrt());
    T::lit(2.0) * s.min(T::one()).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_transform() -> impl Strategy<Value = RigidTransform<f64>> {
        (
            prop::array::uniform3(-180.0f64..180.0),
            prop::array::uniform3(-50.0f64..50.0),
        )
            .prop_map(|(a, t)| RigidTransform::from_euler_deg(a, Vector3::from(t)))
    }

    #[test]
    fn identity_inverse() {
        let i = RigidTransform::<f64>::identity();
        assert_eq!(i.inverse(), i);
        assert_eq!(i.rotation_angle(), 0.0);
    }

    #[test]
    fn euler_order_is_x_then_y_then_z_intrinsic() {
        let t = RigidTransform::from_euler_deg([90.0, 0.0, 0.0], Vector3::zeros());
        let p = t.apply(&Point3::new(0.0, 1.0, 0.0));
        assert!((p - Point3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        // Rx(90) Rz(90): e_x -> e_y under Rz, then e_y -> e_z under Rx
        let t = RigidTransform::from_euler_deg([90.0, 0.0, 90.0], Vector3::zeros());
        assert!((t.apply(&Point3::new(1.0, 0.0, 0.0)) - Point3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn rotation_about_pivot_fixes_pivot() {
        let r = RigidTransform::from_euler_deg([10.0, 20.0, 30.0], Vector3::zeros());
        let pivot = Point3::new(3.0, -4.0, 5.0);
        let t = RigidTransform::about(*r.rotation(), &pivot, Vector3::zeros()).unwrap();
        assert!((t.apply(&pivot) - pivot).norm() < 1e-12);
    }

    #[test]
    fn rejects_reflection() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(m, Vector3::zeros()).is_err());
        assert!(RigidTransform::new(Matrix3::identity() * 2.0, Vector3::zeros()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let t = RigidTransform::from_euler_deg([5.0, -7.0, 11.0], Vector3::new(1.0, 2.0, 3.0));
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("translation_mm"));
        let back: RigidTransform<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn small_angles_are_accurate() {
        let t = RigidTransform::from_euler_deg([0.0, 0.0, 1e-7], Vector3::zeros());
        let expect = 1e-7f64.to_radians();
        assert!((t.rotation_angle() - expect).abs() < 1e-20);
    }

    proptest! {
        #[test]
        fn compose_matches_homogeneous_product(a in arb_transform(), b in arb_transform(), p in prop::array::uniform3(-10.0f64..10.0)) {
            let c = a.compose(&b);
            let h = a.to_homogeneous() * b.to_homogeneous();
            prop_assert!((c.to_homogeneous() - h).norm() < 1e-9);
            let p = Point3::from(p);
            prop_assert!((c.apply(&p) - a.apply(&b.apply(&p))).norm() < 1e-9);
        }

        #[test]
        fn inverse_undoes(a in arb_transform()) {
            let id = a.inverse().compose(&a);
            prop_assert!((id.to_homogeneous() - Matrix4::identity()).norm() < 1e-12);
            prop_assert!((a.compose(&a.inverse()).to_homogeneous() - Matrix4::identity()).norm() < 1e-12);
        }

        #[test]
        fn euler_is_proper_rotation(a in arb_transform()) {
            let r = a.rotation();
            prop_assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-9);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
    }
}
