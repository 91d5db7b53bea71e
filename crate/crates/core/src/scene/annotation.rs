use serde::{Deserialize, Serialize};

use super::{json, ObjectClass, SceneError, FORMAT_VERSION};
use crate::geometry::{normalize_angle, Pose, ShapeParams};
use crate::optimize::FitReport;

/// One reconstructed object, expressed once for the whole clip in world
/// coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticAnnotation {
    pub annotation_id: u64,
    pub track_id: u64,
    pub class: ObjectClass,
    pub params: ShapeParams,
    pub mean_reproj_error: f64,
    pub n_observations_used: usize,
    #[serde(default)]
    pub used_obs_ids: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_report: Option<FitReport>,
}

impl StaticAnnotation {
    pub fn new(annotation_id: u64, track_id: u64, class: ObjectClass, params: ShapeParams) -> Self {
        StaticAnnotation {
            annotation_id,
            track_id,
            class,
            params,
            mean_reproj_error: 0.0,
            n_observations_used: 0,
            used_obs_ids: Vec::new(),
            fit_report: None,
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.class.shape_kind() != self.params.kind() {
            return Err(format!("annotation {}: {:?} params for class {}", self.annotation_id, self.params.kind(), self.class.as_str()));
        }
        self.params.validate().map_err(|e| format!("annotation {}: {e}", self.annotation_id))?;
        if !(self.mean_reproj_error >= 0.0) {
            return Err(format!("annotation {}: negative mean_reproj_error", self.annotation_id));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct AnnotationDocument {
    format_version: String,
    annotations: Vec<StaticAnnotation>,
}

/// Canonical annotation file, records sorted by annotation_id.
pub fn save_annotations(annotations: &[StaticAnnotation]) -> Vec<u8> {
    let mut annotations = annotations.to_vec();
    annotations.sort_by_key(|a| a.annotation_id);
    json::to_canonical_json(&AnnotationDocument { format_version: FORMAT_VERSION.into(), annotations })
}

pub fn load_annotations(document: &[u8]) -> Result<Vec<StaticAnnotation>, SceneError> {
    let doc: AnnotationDocument = serde_json::from_slice(document).map_err(|e| SceneError::Parse(e.to_string()))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(SceneError::Parse(format!("unsupported format_version {:?}", doc.format_version)));
    }
    let mut annotations = doc.annotations;
    for a in &annotations {
        a.validate().map_err(SceneError::Validation)?;
    }
    annotations.sort_by_key(|a| a.annotation_id);
    if annotations.windows(2).any(|w| w[0].annotation_id == w[1].annotation_id) {
        return Err(SceneError::Validation("duplicate annotation_id".into()));
    }
    Ok(annotations)
}

/// An annotation re-expressed in one frame's sensor coordinates.
///
/// The local yaw is measured from the sensor x-axis' world bearing; it is a
/// faithful heading only for sensors whose z-axis is world up (LiDAR or
/// vehicle frames).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLocalAnnotation {
    pub frame_id: u64,
    pub annotation_id: u64,
    pub class: ObjectClass,
    pub params: ShapeParams,
}

fn rebase(params: &ShapeParams, center: nalgebra::Vector3<f64>, yaw: f64) -> ShapeParams {
    let mut x = params.to_vector();
    x[0] = center.x;
    x[1] = center.y;
    x[2] = center.z;
    x[3] = yaw;
    ShapeParams::from_vector(params.kind(), &x)
}

/// Converts clip-level annotations into `world_from_sensor`'s frame.
pub fn clip_to_frame(annotations: &[StaticAnnotation], frame_id: u64, world_from_sensor: &Pose) -> Vec<FrameLocalAnnotation> {
    let heading = world_from_sensor.heading();
    annotations
        .iter()
        .map(|a| FrameLocalAnnotation {
            frame_id,
            annotation_id: a.annotation_id,
            class: a.class,
            params: rebase(
                &a.params,
                world_from_sensor.inverse_transform_point(&a.params.center()),
                normalize_angle(a.params.yaw() - heading),
            ),
        })
        .collect()
}

/// Inverse of [`clip_to_frame`] for a single record.
pub fn frame_to_clip(local: &FrameLocalAnnotation, world_from_sensor: &Pose) -> ShapeParams {
    rebase(
        &local.params,
        world_from_sensor.transform_point(&local.params.center()),
        normalize_angle(local.params.yaw() + world_from_sensor.heading()),
    )
}
