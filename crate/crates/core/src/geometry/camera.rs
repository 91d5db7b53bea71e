use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};

use super::pose::Pose;
use super::scalar::{Real, Vec3};
use super::GeometryError;

/// Depth below which a point is treated as behind the camera.
pub const DEFAULT_MIN_DEPTH: f64 = 0.1;

/// Ideal (undistorted) pinhole intrinsics. Camera frame: x right, y down,
/// z along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(format!("focal lengths must be positive (fx={}, fy={})", self.fx, self.fy));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return Err(format!("cx={} outside (0, {})", self.cx, self.width));
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(format!("cy={} outside (0, {})", self.cy, self.height));
        }
        Ok(())
    }

    /// Projects a camera-frame point.
    pub fn project_camera_point(&self, p: &Vector3<f64>, min_depth: f64) -> Result<Point2<f64>, GeometryError> {
        if !(p.z > min_depth) {
            return Err(GeometryError::BehindCamera { depth: p.z });
        }
        Ok(Point2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Camera-frame ray direction (z = 1) through a pixel.
    pub fn backproject(&self, pixel: &Point2<f64>) -> Vector3<f64> {
        Vector3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, 1.0)
    }

    pub fn contains(&self, pixel: &Point2<f64>, margin: f64) -> bool {
        pixel.x >= margin
            && pixel.y >= margin
            && pixel.x <= self.width as f64 - margin
            && pixel.y <= self.height as f64 - margin
    }
}

/// Projects a world point through `world_from_camera` with the default
/// minimum depth.
pub fn project(cam: &CameraIntrinsics, world_from_camera: &Pose, p_world: &Vector3<f64>) -> Result<Point2<f64>, GeometryError> {
    project_with_min_depth(cam, world_from_camera, p_world, DEFAULT_MIN_DEPTH)
}

pub fn project_with_min_depth(
    cam: &CameraIntrinsics,
    world_from_camera: &Pose,
    p_world: &Vector3<f64>,
    min_depth: f64,
) -> Result<Point2<f64>, GeometryError> {
    let pc = world_from_camera.inverse_transform_point(p_world);
    cam.project_camera_point(&pc, min_depth)
}

/// Generic projection used inside residual evaluation. Returns `None` when
/// the point is not in front of the camera.
pub fn project_generic<T: Real>(cam: &CameraIntrinsics, world_from_camera: &Pose, p_world: Vec3<T>) -> Option<[T; 2]> {
    let pc = world_from_camera.world_to_sensor_generic(p_world);
    if !(pc[2].value() > DEFAULT_MIN_DEPTH) {
        return None;
    }
    Some([pc[0] / pc[2] * cam.fx + cam.cx, pc[1] / pc[2] * cam.fy + cam.cy])
}
