use nalgebra::{Matrix3, Point3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::CloudError;

/// How far a rotation matrix may drift from orthonormal before it is
/// rejected.
pub const POSE_TOLERANCE: f64 = 1e-9;

/// A proper rigid transform: rotation followed by translation.
///
/// Construction validates the rotation, so every held `RigidPose` maps
/// distances and handedness faithfully.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct RigidPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidPose {
    pub fn identity() -> RigidPose {
        RigidPose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose from an explicit rotation matrix and translation.
    ///
    /// The rotation must satisfy `|R^T R - I| <= 1e-9` and `det R` within
    /// the same tolerance of +1; reflections and scaled matrices are
    /// rejected.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<RigidPose, CloudError> {
        let ortho_error = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        let det = rotation.determinant();
        if !ortho_error.is_finite()
            || !det.is_finite()
            || ortho_error > POSE_TOLERANCE
            || (det - 1.0).abs() > POSE_TOLERANCE
            || !translation.iter().all(|c| c.is_finite())
        {
            return Err(CloudError::InvalidPose { ortho_error, det });
        }
        Ok(RigidPose {
            rotation,
            translation,
        })
    }

    /// Rotation-only pose about the given axis, in degrees.
    pub fn from_axis_angle(axis: Vector3<f64>, angle_deg: f64) -> RigidPose {
        let rotation =
            Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle_deg.to_radians());
        RigidPose {
            rotation: rotation.into_inner(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> RigidPose {
        RigidPose {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Replaces the translation, keeping the rotation.
    pub fn with_translation(mut self, translation: Vector3<f64>) -> RigidPose {
        self.translation = translation;
        self
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn apply(&self, point: Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * point.coords + self.translation)
    }

    pub fn apply_vector(&self, v: Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Composition `self * other`: `other` is applied first.
    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        RigidPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidPose {
        let rotation = self.rotation.transpose();
        RigidPose {
            rotation,
            translation: -(rotation * self.translation),
        }
    }

    /// Magnitude of the rotation in degrees, from the matrix trace.
    pub fn rotation_angle_deg(&self) -> f64 {
        let cos = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        cos.acos().to_degrees()
    }

    pub fn translation_norm(&self) -> f64 {
        self.translation.norm()
    }

    /// View of the rotation as a `Rotation3` for mesh transforms.
    pub fn rotation3(&self) -> Rotation3<f64> {
        Rotation3::from_matrix_unchecked(self.rotation)
    }
}

/// Serialized form: row-major rotation plus translation vector.
#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<RigidPose> for PoseRepr {
    fn from(pose: RigidPose) -> PoseRepr {
        let r = &pose.rotation;
        PoseRepr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: pose.translation.into(),
        }
    }
}

impl TryFrom<PoseRepr> for RigidPose {
    type Error = CloudError;

    fn try_from(repr: PoseRepr) -> Result<RigidPose, CloudError> {
        let r = repr.rotation;
        let rotation = Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        );
        RigidPose::new(rotation, Vector3::from(repr.translation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_round_trip() {
        let pose = RigidPose::identity();
        let p = Point3::new(1.0, -2.0, 3.0);
        assert_eq!(pose.apply(p), p);
        assert_eq!(pose.rotation_angle_deg(), 0.0);
    }

    #[test]
    fn rejects_reflection_and_scale() {
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        let err = RigidPose::new(reflection, Vector3::zeros()).unwrap_err();
        assert!(matches!(err, CloudError::InvalidPose { det, .. } if det < 0.0));

        let scaled = Matrix3::identity() * 1.001;
        assert!(RigidPose::new(scaled, Vector3::zeros()).is_err());
    }

    #[test]
    fn compose_matches_sequential_apply() {
        let a = RigidPose::from_axis_angle(Vector3::z(), 30.0)
            .with_translation(Vector3::new(1.0, 0.0, 0.0));
        let b = RigidPose::from_axis_angle(Vector3::x(), -45.0)
            .with_translation(Vector3::new(0.0, 2.0, -1.0));
        let p = Point3::new(0.3, -0.7, 1.9);
        let composed = a.compose(&b).apply(p);
        let sequential = a.apply(b.apply(p));
        assert_relative_eq!(composed, sequential, epsilon = 1e-12);
    }

    #[test]
    fn inverse_cancels() {
        let pose = RigidPose::from_axis_angle(Vector3::new(1.0, 2.0, -0.5), 73.0)
            .with_translation(Vector3::new(4.0, -1.0, 2.5));
        let p = Point3::new(-3.0, 0.25, 8.0);
        assert_relative_eq!(pose.inverse().apply(pose.apply(p)), p, epsilon = 1e-12);
    }

    #[test]
    fn rotation_angle_reads_back() {
        let pose = RigidPose::from_axis_angle(Vector3::new(0.2, -1.0, 0.4), 17.5);
        assert_relative_eq!(pose.rotation_angle_deg(), 17.5, epsilon = 1e-9);
    }

    #[test]
    fn serde_round_trip_validates() {
        let pose = RigidPose::from_axis_angle(Vector3::y(), 12.0)
            .with_translation(Vector3::new(0.5, 1.5, -2.0));
        let json = serde_json::to_string(&pose).unwrap();
        let back: RigidPose = serde_json::from_str(&json).unwrap();
        assert_eq!(back, pose);

        let scaled = r#"{"rotation":[[1.1,0,0],[0,1.1,0],[0,0,1.1]],"translation":[0,0,0]}"#;
        assert!(serde_json::from_str::<RigidPose>(scaled).is_err());
    }
}
