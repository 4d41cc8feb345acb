use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use super::Vec3;

/// Tolerance on orthonormality and determinant for rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("matrix is not a proper rotation (orthonormality error {orthonormality_error:.3e}, det {determinant})")]
pub struct PoseError {
    pub orthonormality_error: f64,
    pub determinant: f64,
}

/// Rigid transform `x ↦ R·x + t` from a local frame into the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Validated constructor.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, PoseError> {
        check_rotation(&rotation)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(PoseError {
                orthonormality_error: f64::NAN,
                determinant: rotation.determinant(),
            });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation given as an axis-angle vector (direction = axis, norm = angle).
    pub fn from_axis_angle(axis_angle: &Vec3, translation: Vec3) -> Self {
        Self {
            rotation: Rotation3::new(*axis_angle).into_inner(),
            translation,
        }
    }

    /// Rotation from its three columns (local x, y, z axes expressed in world).
    pub fn from_columns(x: Vec3, y: Vec3, z: Vec3, translation: Vec3) -> Self {
        Self {
            rotation: Matrix3::from_columns(&[x, y, z]),
            translation,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.tr_mul(&(p - self.translation))
    }

    pub fn inverse_transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation.tr_mul(v)
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Local axis `i` expressed in the world frame.
    pub fn axis(&self, i: usize) -> Vec3 {
        self.rotation.column(i).into_owned()
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    pub fn rotation_from_row_major(values: &[f64; 9]) -> Matrix3<f64> {
        Matrix3::from_row_slice(values)
    }

    pub fn is_proper_rotation(&self) -> bool {
        check_rotation(&self.rotation).is_ok()
    }
}

pub fn check_rotation(m: &Matrix3<f64>) -> Result<(), PoseError> {
    let err = (m.transpose() * m - Matrix3::identity()).abs().max();
    let det = m.determinant();
    if err.is_finite() && err <= ROTATION_TOLERANCE && (det - 1.0).abs() <= ROTATION_TOLERANCE {
        Ok(())
    } else {
        Err(PoseError {
            orthonormality_error: err,
            determinant: det,
        })
    }
}

/// Serialized form shared by the JSON artifacts: 9 row-major scalars plus translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        Self {
            rotation: p.to_row_major(),
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl TryFrom<PoseRecord> for Pose {
    type Error = PoseError;

    fn try_from(r: PoseRecord) -> Result<Self, PoseError> {
        Pose::new(
            Pose::rotation_from_row_major(&r.rotation),
            Vec3::from(r.translation),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn inverse_round_trips_points() {
        let pose = Pose::from_axis_angle(&Vec3::new(0.3, -0.2, 0.9), Vec3::new(1.0, 2.0, -3.0));
        let p = Vec3::new(0.4, -1.1, 2.5);
        let back = pose.inverse_transform_point(&pose.transform_point(&p));
        assert!((back - p).norm() < 1e-12);
        let composed = pose.compose(&pose.inverse());
        assert!((composed.rotation - Matrix3::identity()).abs().max() < 1e-12);
        assert!(composed.translation.norm() < 1e-12);
    }

    #[test]
    fn rejects_reflections_and_scaling() {
        let reflection = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(Pose::new(reflection, Vec3::zeros()).is_err());
        assert!(Pose::new(Matrix3::identity() * 2.0, Vec3::zeros()).is_err());
        let quarter = Pose::from_axis_angle(&Vec3::new(0.0, 0.0, FRAC_PI_2), Vec3::zeros());
        assert!(quarter.is_proper_rotation());
    }

    #[test]
    fn row_major_layout() {
        let pose = Pose::from_axis_angle(&Vec3::new(0.0, 0.0, FRAC_PI_2), Vec3::zeros());
        let rm = pose.to_row_major();
        // R = [[0,-1,0],[1,0,0],[0,0,1]]
        assert!((rm[1] + 1.0).abs() < 1e-15);
        assert!((rm[3] - 1.0).abs() < 1e-15);
        let r = Pose::rotation_from_row_major(&rm);
        assert_eq!(r, pose.rotation);
    }
}
