//! Ingestion data model: camera frames, sparse map points, instance
//! observations and (for simulated scenes) ground truth.

mod annotation;
pub mod json;

use std::collections::{BTreeMap, HashMap, HashSet};

use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::polygon::{is_simple, polygon_area, polygon_centroid, to_ccw};
use crate::geometry::{Aabb2, CameraIntrinsics, Polygon, Pose, ShapeKind, ShapeParams};

pub use annotation::{
    clip_to_frame, frame_to_clip, load_annotations, save_annotations, FrameLocalAnnotation, StaticAnnotation,
};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Guideboard,
    CircularSign,
    TrafficLight,
    TrafficCone,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 4] =
        [ObjectClass::Guideboard, ObjectClass::CircularSign, ObjectClass::TrafficLight, ObjectClass::TrafficCone];

    pub fn shape_kind(self) -> ShapeKind {
        match self {
            ObjectClass::Guideboard => ShapeKind::Rect,
            ObjectClass::CircularSign => ShapeKind::Circle,
            ObjectClass::TrafficLight | ObjectClass::TrafficCone => ShapeKind::Cuboid,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Guideboard => "guideboard",
            ObjectClass::CircularSign => "circular_sign",
            ObjectClass::TrafficLight => "traffic_light",
            ObjectClass::TrafficCone => "traffic_cone",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFrame {
    pub frame_id: u64,
    /// Microseconds.
    pub timestamp: i64,
    pub intrinsics: CameraIntrinsics,
    pub world_from_camera: Pose,
    pub camera_name: String,
    /// Offset to the paired LiDAR sweep, when known; used only by the
    /// evaluation timestamp filter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paired_timestamp_offset_us: Option<i64>,
}

impl CameraFrame {
    pub fn camera_center(&self) -> Vector3<f64> {
        self.world_from_camera.translation
    }

    pub fn project(&self, p: &Vector3<f64>) -> Result<Point2<f64>, crate::geometry::GeometryError> {
        crate::geometry::project(&self.intrinsics, &self.world_from_camera, p)
    }

    /// Unit viewing ray through `pixel`, in world coordinates.
    pub fn ray(&self, pixel: &Point2<f64>) -> Vector3<f64> {
        (self.world_from_camera.rotation * self.intrinsics.backproject(pixel)).normalize()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointObservation {
    pub frame_id: u64,
    pub pixel: Point2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMapPoint {
    pub point_id: u64,
    pub position: Vector3<f64>,
    pub observations: Vec<KeypointObservation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceObservation {
    pub obs_id: u64,
    pub frame_id: u64,
    pub class: ObjectClass,
    pub det_box: Aabb2,
    pub mask: Polygon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    pub object_id: u64,
    pub class: ObjectClass,
    pub params: ShapeParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtObservationLabel {
    pub obs_id: u64,
    pub object_id: u64,
    pub occluded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtPointLabel {
    pub point_id: u64,
    pub object_id: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub objects: Vec<GtObject>,
    pub observation_labels: Vec<GtObservationLabel>,
    pub point_labels: Vec<GtPointLabel>,
}

impl GroundTruth {
    pub fn object_of_observation(&self) -> HashMap<u64, u64> {
        self.observation_labels.iter().map(|l| (l.obs_id, l.object_id)).collect()
    }

    pub fn occluded_observations(&self) -> HashSet<u64> {
        self.observation_labels.iter().filter(|l| l.occluded).map(|l| l.obs_id).collect()
    }

    pub fn object_of_point(&self) -> HashMap<u64, u64> {
        self.point_labels.iter().map(|l| (l.point_id, l.object_id)).collect()
    }

    /// Ground-truth objects in annotation form, for evaluation.
    pub fn to_annotations(&self) -> Vec<StaticAnnotation> {
        self.objects
            .iter()
            .map(|o| StaticAnnotation::new(o.object_id, o.object_id, o.class, o.params))
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct SceneDocument {
    format_version: String,
    frames: Vec<CameraFrame>,
    map_points: Vec<SparseMapPoint>,
    observations: Vec<InstanceObservation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<GroundTruth>,
}

/// A validated scene. Records are kept sorted by id; lookups go through
/// prebuilt indices.
#[derive(Debug, Clone)]
pub struct Scene {
    frames: Vec<CameraFrame>,
    map_points: Vec<SparseMapPoint>,
    observations: Vec<InstanceObservation>,
    ground_truth: Option<GroundTruth>,
    frame_index: HashMap<u64, usize>,
    point_index: HashMap<u64, usize>,
    obs_index: HashMap<u64, usize>,
    obs_by_frame: BTreeMap<u64, Vec<usize>>,
}

impl PartialEq for Scene {
    fn eq(&self, other: &Self) -> bool {
        self.frames == other.frames
            && self.map_points == other.map_points
            && self.observations == other.observations
            && self.ground_truth == other.ground_truth
    }
}

fn finite2(p: &Point2<f64>) -> bool {
    p.x.is_finite() && p.y.is_finite()
}

impl Scene {
    /// Normalizes (sorts records, orients masks counter-clockwise) and
    /// validates every invariant of the data model.
    pub fn new(
        mut frames: Vec<CameraFrame>,
        mut map_points: Vec<SparseMapPoint>,
        mut observations: Vec<InstanceObservation>,
        ground_truth: Option<GroundTruth>,
    ) -> Result<Scene, SceneError> {
        let invalid = |m: String| Err(SceneError::Validation(m));
        if frames.is_empty() {
            return invalid("no frames".into());
        }
        frames.sort_by_key(|f| f.frame_id);
        map_points.sort_by_key(|p| p.point_id);
        observations.sort_by_key(|o| o.obs_id);

        let mut frame_index = HashMap::new();
        let mut last_ts: HashMap<&str, i64> = HashMap::new();
        for (i, f) in frames.iter().enumerate() {
            if frame_index.insert(f.frame_id, i).is_some() {
                return invalid(format!("duplicate frame_id {}", f.frame_id));
            }
            if let Err(e) = f.intrinsics.validate() {
                return invalid(format!("frame {}: {e}", f.frame_id));
            }
            let pose = &f.world_from_camera;
            if pose.quaternion_norm_error() > 1e-9 || !pose.translation.iter().all(|v| v.is_finite()) {
                return invalid(format!("frame {}: bad quaternion or translation", f.frame_id));
            }
            if let Some(prev) = last_ts.insert(f.camera_name.as_str(), f.timestamp) {
                if f.timestamp < prev {
                    return invalid(format!(
                        "frame {}: timestamp decreases for camera {}",
                        f.frame_id, f.camera_name
                    ));
                }
            }
        }

        let mut point_index = HashMap::new();
        for (i, p) in map_points.iter_mut().enumerate() {
            if point_index.insert(p.point_id, i).is_some() {
                return invalid(format!("duplicate point_id {}", p.point_id));
            }
            if !p.position.iter().all(|v| v.is_finite()) {
                return invalid(format!("map point {}: non-finite position", p.point_id));
            }
            if p.observations.len() < 2 {
                return invalid(format!("map point {}: fewer than 2 observations", p.point_id));
            }
            p.observations.sort_by_key(|o| o.frame_id);
            for w in p.observations.windows(2) {
                if w[0].frame_id == w[1].frame_id {
                    return invalid(format!("map point {}: two observations in frame {}", p.point_id, w[0].frame_id));
                }
            }
            for o in &p.observations {
                let Some(&fi) = frame_index.get(&o.frame_id) else {
                    return invalid(format!("map point {}: unknown frame_id {}", p.point_id, o.frame_id));
                };
                if !finite2(&o.pixel) {
                    return invalid(format!("map point {}: non-finite pixel", p.point_id));
                }
                let f = &frames[fi];
                let pc = f.world_from_camera.inverse_transform_point(&p.position);
                let proj = f.intrinsics.project_camera_point(&pc, 0.0);
                if !proj.map(|q| finite2(&q)).unwrap_or(false) {
                    return invalid(format!(
                        "map point {}: reprojection into frame {} is not finite",
                        p.point_id, o.frame_id
                    ));
                }
            }
        }

        let mut obs_index = HashMap::new();
        let mut obs_by_frame: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, o) in observations.iter_mut().enumerate() {
            if obs_index.insert(o.obs_id, i).is_some() {
                return invalid(format!("duplicate obs_id {}", o.obs_id));
            }
            if !frame_index.contains_key(&o.frame_id) {
                return invalid(format!("observation {}: unknown frame_id {}", o.obs_id, o.frame_id));
            }
            if o.mask.len() < 3 || !o.mask.iter().all(finite2) {
                return invalid(format!("observation {}: mask needs at least 3 finite vertices", o.obs_id));
            }
            if polygon_area(&o.mask) <= 0.0 || !is_simple(&o.mask) {
                return invalid(format!("observation {}: degenerate or self-intersecting mask", o.obs_id));
            }
            o.mask = to_ccw(std::mem::take(&mut o.mask));
            let b = &o.det_box;
            if !(finite2(&b.min) && finite2(&b.max) && b.min.x < b.max.x && b.min.y < b.max.y) {
                return invalid(format!("observation {}: invalid det_box", o.obs_id));
            }
            if !b.contains(&polygon_centroid(&o.mask)) {
                return invalid(format!("observation {}: det_box does not contain mask centroid", o.obs_id));
            }
            obs_by_frame.entry(o.frame_id).or_default().push(i);
        }

        if let Some(gt) = &ground_truth {
            let mut ids = HashSet::new();
            for obj in &gt.objects {
                if !ids.insert(obj.object_id) {
                    return invalid(format!("ground truth: duplicate object_id {}", obj.object_id));
                }
                if obj.class.shape_kind() != obj.params.kind() {
                    return invalid(format!("ground truth object {}: params do not match class", obj.object_id));
                }
                if let Err(e) = obj.params.validate() {
                    return invalid(format!("ground truth object {}: {e}", obj.object_id));
                }
            }
            for l in &gt.observation_labels {
                if !obs_index.contains_key(&l.obs_id) || !ids.contains(&l.object_id) {
                    return invalid(format!("ground truth label for obs {} is dangling", l.obs_id));
                }
            }
            for l in &gt.point_labels {
                if !point_index.contains_key(&l.point_id) || !ids.contains(&l.object_id) {
                    return invalid(format!("ground truth label for point {} is dangling", l.point_id));
                }
            }
        }

        Ok(Scene { frames, map_points, observations, ground_truth, frame_index, point_index, obs_index, obs_by_frame })
    }

    pub fn frames(&self) -> &[CameraFrame] {
        &self.frames
    }

    pub fn map_points(&self) -> &[SparseMapPoint] {
        &self.map_points
    }

    pub fn observations(&self) -> &[InstanceObservation] {
        &self.observations
    }

    pub fn ground_truth(&self) -> Option<&GroundTruth> {
        self.ground_truth.as_ref()
    }

    pub fn frame(&self, frame_id: u64) -> Option<&CameraFrame> {
        self.frame_index.get(&frame_id).map(|&i| &self.frames[i])
    }

    pub fn map_point(&self, point_id: u64) -> Option<&SparseMapPoint> {
        self.point_index.get(&point_id).map(|&i| &self.map_points[i])
    }

    pub fn observation(&self, obs_id: u64) -> Option<&InstanceObservation> {
        self.obs_index.get(&obs_id).map(|&i| &self.observations[i])
    }

    /// Observations in `frame_id`, ordered by obs_id.
    pub fn observations_in_frame(&self, frame_id: u64) -> impl Iterator<Item = &InstanceObservation> {
        self.obs_by_frame.get(&frame_id).into_iter().flatten().map(|&i| &self.observations[i])
    }

    pub fn into_parts(self) -> (Vec<CameraFrame>, Vec<SparseMapPoint>, Vec<InstanceObservation>, Option<GroundTruth>) {
        (self.frames, self.map_points, self.observations, self.ground_truth)
    }

    pub fn with_ground_truth(self, gt: Option<GroundTruth>) -> Result<Scene, SceneError> {
        let (f, p, o, _) = self.into_parts();
        Scene::new(f, p, o, gt)
    }
}

pub fn load_scene(document: &[u8]) -> Result<Scene, SceneError> {
    let doc: SceneDocument = serde_json::from_slice(document).map_err(|e| SceneError::Parse(e.to_string()))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(SceneError::Parse(format!("unsupported format_version {:?}", doc.format_version)));
    }
    Scene::new(doc.frames, doc.map_points, doc.observations, doc.ground_truth)
}

pub fn save_scene(scene: &Scene) -> Vec<u8> {
    let doc = SceneDocument {
        format_version: FORMAT_VERSION.to_string(),
        frames: scene.frames.clone(),
        map_points: scene.map_points.clone(),
        observations: scene.observations.clone(),
        ground_truth: scene.ground_truth.clone(),
    };
    json::to_canonical_json(&doc)
}
