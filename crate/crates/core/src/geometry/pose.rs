use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::scalar::{Real, Vec3};

/// Rigid transform mapping sensor coordinates into world coordinates.
///
/// Serialized as `{"rotation": [w, x, y, z], "translation": [x, y, z]}`. The
/// quaternion is stored as read; [`Pose::quaternion_norm_error`] reports how
/// far it is from unit length so loaders can reject it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRecord", into = "PoseRecord")]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRecord {
    rotation: [f64; 4],
    translation: [f64; 3],
}

impl From<PoseRecord> for Pose {
    fn from(r: PoseRecord) -> Self {
        let [w, x, y, z] = r.rotation;
        Pose {
            rotation: UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z)),
            translation: Vector3::from(r.translation),
        }
    }
}

impl From<Pose> for PoseRecord {
    fn from(p: Pose) -> Self {
        let q = p.rotation.quaternion();
        PoseRecord {
            rotation: [q.w, q.i, q.j, q.k],
            translation: p.translation.into(),
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
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Pose { rotation, translation }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Pose { rotation: UnitQuaternion::identity(), translation }
    }

    /// Rotation about the world up-axis followed by a translation.
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        Pose {
            rotation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            translation,
        }
    }

    /// Builds a pose from a rotation matrix whose columns are the sensor axes
    /// expressed in world coordinates.
    pub fn from_axes(x: Vector3<f64>, y: Vector3<f64>, z: Vector3<f64>, translation: Vector3<f64>) -> Self {
        let m = Matrix3::from_columns(&[x, y, z]);
        let rot = Rotation3::from_matrix_unchecked(m);
        Pose {
            rotation: UnitQuaternion::from_rotation_matrix(&rot),
            translation,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (p - self.translation)
    }

    pub fn inverse(&self) -> Pose {
        let rot = self.rotation.inverse();
        Pose {
            rotation: rot,
            translation: -(rot * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// World bearing of the sensor x-axis projected onto the horizontal plane.
    pub fn heading(&self) -> f64 {
        let r = self.rotation_matrix();
        r[(1, 0)].atan2(r[(0, 0)])
    }

    pub fn quaternion_norm_error(&self) -> f64 {
        (self.rotation.quaternion().norm() - 1.0).abs()
    }

    /// Maps a world point into this sensor's frame; generic over the scalar
    /// so the optimizer can differentiate through it.
    pub fn world_to_sensor_generic<T: Real>(&self, p: Vec3<T>) -> Vec3<T> {
        let r = self.rotation_matrix();
        let t = self.translation;
        let d = [p[0] - t.x, p[1] - t.y, p[2] - t.z];
        // R^T * d
        [
            d[0] * r[(0, 0)] + d[1] * r[(1, 0)] + d[2] * r[(2, 0)],
            d[0] * r[(0, 1)] + d[1] * r[(1, 1)] + d[2] * r[(2, 1)],
            d[0] * r[(0, 2)] + d[1] * r[(1, 2)] + d[2] * r[(2, 2)],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_leaves_point() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(Pose::identity().transform_point(&p), p);
    }

    #[test]
    fn pure_translation() {
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 5.0));
        assert_eq!(pose.transform_point(&Vector3::zeros()), Vector3::new(0.0, 0.0, 5.0));
    }

    #[test]
    fn quarter_turn_about_z() {
        let pose = Pose::from_yaw(FRAC_PI_2, Vector3::zeros());
        let q = pose.transform_point(&Vector3::new(1.0, 0.0, 0.0));
        assert!((q - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let pose = Pose::new(
            UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1),
            Vector3::new(4.0, -2.0, 7.5),
        );
        let id = pose.compose(&pose.inverse());
        assert!(id.rotation.angle() < 1e-9);
        assert!(id.translation.norm() < 1e-9);
        let p = Vector3::new(0.4, 9.0, -3.0);
        let back = pose.inverse_transform_point(&pose.transform_point(&p));
        assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn serializes_wxyz() {
        let pose = Pose::from_translation(Vector3::new(1.0, 2.0, 3.0));
        let s = serde_json::to_string(&pose).unwrap();
        assert_eq!(s, r#"{"rotation":[1.0,0.0,0.0,0.0],"translation":[1.0,2.0,3.0]}"#);
        let back: Pose = serde_json::from_str(&s).unwrap();
        assert_eq!(back, pose);
    }

    #[test]
    fn heading_of_yaw_pose() {
        let pose = Pose::from_yaw(0.7, Vector3::zeros());
        assert!((pose.heading() - 0.7).abs() < 1e-12);
    }
}
