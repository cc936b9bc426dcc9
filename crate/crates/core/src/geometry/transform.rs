use serde::{Deserialize, Serialize};

use super::{Matrix3, Point3, Vector3};

const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// A proper rigid motion `p -> R p + t` with `R` in SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3,
    translation: Vector3,
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
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, re-orthonormalizing `rotation` when it drifts from
    /// SO(3) by more than 1e-9 per entry.
    pub fn new(rotation: Matrix3, translation: Vector3) -> Self {
        Self {
            rotation: project_to_so3(rotation),
            translation,
        }
    }

    pub fn from_translation(translation: Vector3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Matrix3) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    pub fn rotation(&self) -> &Matrix3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3 {
        &self.translation
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn rotate(&self, v: &Vector3) -> Vector3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        super::rotation_angle(&self.rotation)
    }

    pub fn is_valid(&self) -> bool {
        orthonormal_drift(&self.rotation) <= ORTHONORMAL_TOLERANCE
            && (self.rotation.determinant() - 1.0).abs() <= ORTHONORMAL_TOLERANCE
            && self.rotation.iter().all(|x| x.is_finite())
            && self.translation.iter().all(|x| x.is_finite())
    }

    /// Rotation rows flattened row-major.
    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)],
            r[(1, 0)], r[(1, 1)], r[(1, 2)],
            r[(2, 0)], r[(2, 1)], r[(2, 2)],
        ]
    }

    pub fn from_row_major(rotation: [f64; 9], translation: [f64; 3]) -> Self {
        Self::new(
            Matrix3::from_row_slice(&rotation),
            Vector3::new(translation[0], translation[1], translation[2]),
        )
    }
}

fn orthonormal_drift(r: &Matrix3) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

fn project_to_so3(r: Matrix3) -> Matrix3 {
    if orthonormal_drift(&r) <= ORTHONORMAL_TOLERANCE
        && (r.determinant() - 1.0).abs() <= ORTHONORMAL_TOLERANCE
    {
        return r;
    }
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}

/// Serialized form: row-major rotation plus translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&RigidTransform> for TransformRecord {
    fn from(t: &RigidTransform) -> Self {
        Self {
            rotation: t.rotation_row_major(),
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl From<&TransformRecord> for RigidTransform {
    fn from(r: &TransformRecord) -> Self {
        RigidTransform::from_row_major(r.rotation, r.translation)
    }
}

impl Serialize for RigidTransform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        TransformRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        TransformRecord::deserialize(d).map(|r| RigidTransform::from(&r))
    }
}
