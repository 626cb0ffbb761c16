use std::ops::Mul;

use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use super::{Point3, UnitVec3};
use crate::error::{Error, Result};

/// Rigid transform: `p -> R p + t`, translation in millimeters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    rotation: Rotation3<f64>,
    translation: Point3,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    /// Row-major 3x3 rotation.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<PoseRepr> for Pose {
    type Error = Error;

    fn try_from(r: PoseRepr) -> Result<Self> {
        let m = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        Pose::new(m, Point3::from(r.translation))
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        let m = p.rotation.matrix();
        PoseRepr {
            rotation: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Rotation3::identity(),
            translation: Point3::zeros(),
        }
    }

    /// Validates that `rotation` is orthonormal with determinant +1 (within 1e-9).
    pub fn new(rotation: Matrix3<f64>, translation: Point3) -> Result<Self> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("non-finite entry".into()));
        }
        let err = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max();
        if err > 1e-9 {
            return Err(Error::InvalidPose(format!(
                "rotation is not orthonormal (max |R^T R - I| = {err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPose(format!("rotation determinant is {det}")));
        }
        Ok(Pose {
            rotation: Rotation3::from_matrix_unchecked(rotation),
            translation,
        })
    }

    pub fn from_parts(rotation: Rotation3<f64>, translation: Point3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Point3) -> Self {
        Pose {
            rotation: Rotation3::identity(),
            translation,
        }
    }

    pub fn from_axis_angle(axis: &UnitVec3, angle: f64) -> Self {
        Pose {
            rotation: Rotation3::from_axis_angle(axis, angle),
            translation: Point3::zeros(),
        }
    }

    /// Pose whose local `z` axis is `z`, whose local `x` axis is the
    /// component of `x_hint` orthogonal to `z`, placed at `origin`.
    pub fn from_z_and_x(z: &UnitVec3, x_hint: &Point3, origin: Point3) -> Option<Self> {
        let zv = z.into_inner();
        let x = super::unit(x_hint - zv * x_hint.dot(&zv))?.into_inner();
        let y = zv.cross(&x);
        let m = Matrix3::from_columns(&[x, y, zv]);
        Some(Pose {
            rotation: Rotation3::from_matrix_unchecked(m),
            translation: origin,
        })
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> Point3 {
        self.translation
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Point3) -> Point3 {
        self.rotation * v
    }

    pub fn transform_unit(&self, v: &UnitVec3) -> UnitVec3 {
        UnitVec3::new_unchecked(self.rotation * v.into_inner())
    }

    pub fn inverse_transform_point(&self, p: &Point3) -> Point3 {
        self.rotation.inverse() * (p - self.translation)
    }

    pub fn inverse_transform_vector(&self, v: &Point3) -> Point3 {
        self.rotation.inverse() * v
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let r = self.rotation.inverse();
        Pose {
            rotation: r,
            translation: -(r * self.translation),
        }
    }

    pub fn translated(&self, delta: &Point3) -> Pose {
        Pose {
            rotation: self.rotation,
            translation: self.translation + delta,
        }
    }

    /// Rotates this pose by `angle` about a world-frame axis through `pivot`.
    pub fn rotated_about(&self, axis: &UnitVec3, angle: f64, pivot: &Point3) -> Pose {
        let r = Rotation3::from_axis_angle(axis, angle);
        Pose {
            rotation: r * self.rotation,
            translation: pivot + r * (self.translation - pivot),
        }
    }

    /// Local frame axis `i` (0 = x, 1 = y, 2 = z) expressed in the parent frame.
    pub fn axis(&self, i: usize) -> UnitVec3 {
        UnitVec3::new_unchecked(self.rotation.matrix().column(i).into_owned())
    }

    /// Six pose coordinates: translation (mm) followed by the rotation vector (rad).
    pub fn coordinates(&self) -> [f64; 6] {
        // via the quaternion, which stays well defined near half turns
        let r = nalgebra::UnitQuaternion::from_rotation_matrix(&self.rotation).scaled_axis();
        let t = self.translation;
        [t.x, t.y, t.z, r.x, r.y, r.z]
    }

    /// Maximum deviation of `R^T R` from identity; used by validation tests.
    pub fn orthonormality_error(&self) -> f64 {
        let m = self.rotation.matrix();
        (m.transpose() * m - Matrix3::identity()).abs().max()
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}
