//! Deterministic synthetic scenes: a camera trajectory, ground-truth static
//! objects, sparse map points and instance observations.

mod fixtures;

use std::f64::consts::{FRAC_PI_6, PI};

use nalgebra::{Point2, Vector3};
use rand::seq::index::sample;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::polygon::{clip_half_plane, is_simple};
use crate::geometry::shapes::yaw_from_normal;
use crate::geometry::{
    convex_hull, normalize_angle, Aabb2, CameraIntrinsics, CircleSignParams, CuboidParams, Polygon, Pose,
    RectSignParams, ShapeParams,
};
use crate::scene::{
    CameraFrame, GroundTruth, GtObject, GtObservationLabel, GtPointLabel, InstanceObservation, KeypointObservation,
    ObjectClass, Scene, SparseMapPoint,
};

pub const CAMERA_HEIGHT: f64 = 1.5;
pub use fixtures::{duplicate_track_scene, stitched_pair_scene};

const FRAME_INTERVAL_US: i64 = 100_000;
const FACING_LOOKBACK: f64 = 25.0;
const YAW_JITTER: f64 = 20.0 * PI / 180.0;
const IMAGE_MARGIN: f64 = 2.0;
const MIN_MASK_EXTENT: f64 = 6.0;
const DEPTH_RANGE: (f64, f64) = (1.0, 60.0);
/// Minimum cosine between the front normal and the direction to the camera.
const MIN_VIEW_COSINE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_signs: usize,
    pub n_lights: usize,
    pub n_circles: usize,
    pub n_cones: usize,
    /// Meters.
    pub trajectory_length: f64,
    pub n_frames: usize,
    /// Lateral offset of objects from the path, meters.
    pub sign_distance_range: (f64, f64),
    pub pixel_noise_sigma: f64,
    pub outlier_fraction: f64,
    pub outlier_magnitude: f64,
    pub dropout_fraction: f64,
    pub occluder_fraction: f64,
    pub keypoints_per_object_range: (usize, usize),
    pub n_background_points: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_signs: 10,
            n_lights: 3,
            n_circles: 3,
            n_cones: 2,
            trajectory_length: 120.0,
            n_frames: 60,
            sign_distance_range: (4.0, 10.0),
            pixel_noise_sigma: 0.0,
            outlier_fraction: 0.0,
            outlier_magnitude: 20.0,
            dropout_fraction: 0.0,
            occluder_fraction: 0.0,
            keypoints_per_object_range: (12, 24),
            n_background_points: 200,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: String| Err(SynthError::Config(m));
        if self.n_frames == 0 {
            return err("n_frames must be positive".into());
        }
        if !(self.trajectory_length > 0.0 && self.trajectory_length.is_finite()) {
            return err(format!("trajectory_length must be positive, got {}", self.trajectory_length));
        }
        let (lo, hi) = self.sign_distance_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return err(format!("sign_distance_range must satisfy 0 < min <= max, got ({lo}, {hi})"));
        }
        let (kmin, kmax) = self.keypoints_per_object_range;
        if kmin == 0 || kmin > kmax {
            return err(format!("keypoints_per_object_range must satisfy 0 < min <= max, got ({kmin}, {kmax})"));
        }
        if !(self.pixel_noise_sigma >= 0.0 && self.pixel_noise_sigma.is_finite()) {
            return err(format!("pixel_noise_sigma must be non-negative, got {}", self.pixel_noise_sigma));
        }
        if !(self.outlier_magnitude >= 0.0 && self.outlier_magnitude.is_finite()) {
            return err(format!("outlier_magnitude must be non-negative, got {}", self.outlier_magnitude));
        }
        for (name, v) in [
            ("outlier_fraction", self.outlier_fraction),
            ("dropout_fraction", self.dropout_fraction),
            ("occluder_fraction", self.occluder_fraction),
        ] {
            if !(0.0..1.0).contains(&v) {
                return err(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        Ok(())
    }

    pub fn n_objects(&self) -> usize {
        self.n_signs + self.n_lights + self.n_circles + self.n_cones
    }
}

pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics { fx: 1000.0, fy: 1000.0, cx: 960.0, cy: 540.0, width: 1920, height: 1080 }
}

/// Ground-plane position and heading at arc length `s`: straight for the
/// first half, then a 30° left arc. Negative `s` extends the straight part.
pub fn path_point(length: f64, s: f64) -> (Vector3<f64>, f64) {
    let half = length / 2.0;
    if s <= half {
        return (Vector3::new(s, 0.0, 0.0), 0.0);
    }
    let radius = half / FRAC_PI_6;
    let psi = (s - half) / radius;
    (Vector3::new(half + radius * psi.sin(), radius * (1.0 - psi.cos()), 0.0), psi)
}

/// Camera looking along the path heading.
pub fn camera_pose(position: Vector3<f64>, heading: f64) -> Pose {
    let forward = Vector3::new(heading.cos(), heading.sin(), 0.0);
    let right = Vector3::new(heading.sin(), -heading.cos(), 0.0);
    let down = Vector3::new(0.0, 0.0, -1.0);
    Pose::from_axes(right, down, forward, position)
}

pub fn trajectory(cfg: &SynthConfig) -> Vec<CameraFrame> {
    let n = cfg.n_frames;
    (0..n)
        .map(|i| {
            let s = if n > 1 { cfg.trajectory_length * i as f64 / (n - 1) as f64 } else { 0.0 };
            let (p, psi) = path_point(cfg.trajectory_length, s);
            CameraFrame {
                frame_id: i as u64,
                timestamp: i as i64 * FRAME_INTERVAL_US,
                intrinsics: default_intrinsics(),
                world_from_camera: camera_pose(p + Vector3::new(0.0, 0.0, CAMERA_HEIGHT), psi),
                camera_name: "front".into(),
                paired_timestamp_offset_us: None,
            }
        })
        .collect()
}

/// Image outline of `params` in `frame`: the projected quad for rectangles,
/// projected contour samples for circles, and the hull of the projected
/// corners for cuboids. `None` if any outline point is behind the camera.
pub fn render_mask(params: &ShapeParams, frame: &CameraFrame) -> Option<Polygon> {
    let pts: Option<Vec<Point2<f64>>> = params.outline_points().iter().map(|p| frame.project(p).ok()).collect();
    let pts = pts?;
    Some(match params {
        ShapeParams::Cuboid(_) => convex_hull(&pts),
        _ => pts,
    })
}

fn class_schedule(cfg: &SynthConfig) -> Vec<ObjectClass> {
    let mut counts = [
        (ObjectClass::Guideboard, cfg.n_signs),
        (ObjectClass::TrafficLight, cfg.n_lights),
        (ObjectClass::CircularSign, cfg.n_circles),
        (ObjectClass::TrafficCone, cfg.n_cones),
    ];
    let total = cfg.n_objects();
    let mut out = Vec::with_capacity(total);
    // interleave classes so every kind is spread along the path
    while out.len() < total {
        for (class, left) in counts.iter_mut() {
            if *left > 0 {
                out.push(*class);
                *left -= 1;
            }
        }
    }
    out
}

fn sample_params(class: ObjectClass, center_xy: Vector3<f64>, yaw: f64, rng: &mut impl Rng) -> ShapeParams {
    let at = |z: f64| Vector3::new(center_xy.x, center_xy.y, z);
    match class {
        ObjectClass::Guideboard => {
            let width = rng.random_range(0.8..2.0);
            let height = rng.random_range(0.5..1.2);
            let z = rng.random_range(2.0..4.0);
            ShapeParams::Rect(RectSignParams { center: at(z), yaw, width, height })
        }
        ObjectClass::CircularSign => {
            let radius = rng.random_range(0.3..0.5);
            let z = rng.random_range(2.0..3.0);
            ShapeParams::Circle(CircleSignParams { center: at(z), yaw, radius })
        }
        ObjectClass::TrafficLight => {
            let width = rng.random_range(0.35..0.45);
            let height = rng.random_range(1.0..1.2);
            let depth = rng.random_range(0.3..0.4);
            let z = rng.random_range(3.5..5.0);
            ShapeParams::Cuboid(CuboidParams { center: at(z), yaw, width, height, depth })
        }
        ObjectClass::TrafficCone => {
            let width = rng.random_range(0.3..0.4);
            let height = rng.random_range(0.5..0.7);
            ShapeParams::Cuboid(CuboidParams { center: at(height / 2.0), yaw, width, height, depth: width })
        }
    }
}

/// Points on the object's surface (slightly inset from its outline).
fn sample_surface(params: &ShapeParams, n: usize, rng: &mut impl Rng) -> Vec<Vector3<f64>> {
    let c = params.center();
    let a = Vector3::new(params.yaw().cos(), params.yaw().sin(), 0.0);
    let nrm = params.normal();
    let up = Vector3::z();
    (0..n)
        .map(|_| match params {
            ShapeParams::Rect(r) => {
                let u = rng.random_range(-0.45..0.45) * r.width;
                let v = rng.random_range(-0.45..0.45) * r.height;
                c + a * u + up * v
            }
            ShapeParams::Circle(r) => {
                let rho = r.radius * 0.9 * rng.random_range(0.0f64..1.0).sqrt();
                let phi = rng.random_range(0.0..2.0 * PI);
                c + a * (rho * phi.cos()) + up * (rho * phi.sin())
            }
            ShapeParams::Cuboid(b) => {
                let face = rng.random_range(0..6usize);
                let half = [b.width / 2.0, b.height / 2.0, b.depth / 2.0];
                let mut l = [0.0; 3];
                for (k, v) in l.iter_mut().enumerate() {
                    *v = rng.random_range(-0.9..0.9) * half[k];
                }
                let axis = face / 2;
                l[axis] = if face % 2 == 0 { half[axis] } else { -half[axis] };
                c + a * l[0] + up * l[1] + nrm * l[2]
            }
        })
        .collect()
}

fn visible_outline(params: &ShapeParams, frame: &CameraFrame) -> Option<Polygon> {
    let c = params.center();
    let to_cam = frame.camera_center() - c;
    if to_cam.dot(&params.normal()) < MIN_VIEW_COSINE * to_cam.norm() {
        return None;
    }
    let depth = frame.world_from_camera.inverse_transform_point(&c).z;
    if !(DEPTH_RANGE.0..=DEPTH_RANGE.1).contains(&depth) {
        return None;
    }
    let mask = render_mask(params, frame)?;
    if !mask.iter().all(|p| frame.intrinsics.contains(p, IMAGE_MARGIN)) {
        return None;
    }
    let b = Aabb2::from_points(&mask)?;
    if b.width().min(b.height()) < MIN_MASK_EXTENT {
        return None;
    }
    Some(mask)
}

/// Places the configured objects along the path.
pub fn place_objects(cfg: &SynthConfig, rng: &mut impl Rng) -> Vec<GtObject> {
    let length = cfg.trajectory_length;
    let classes = class_schedule(cfg);
    let n_obj = classes.len();
    let mut objects = Vec::with_capacity(n_obj);
    for (i, class) in classes.iter().enumerate() {
        let s = length * (0.2 + 0.8 * (i as f64 + rng.random_range(0.3..0.7)) / n_obj as f64);
        let (p, psi) = path_point(length, s);
        let side = if i % 2 == 0 { 1.0 } else { -1.0 };
        let lateral = rng.random_range(cfg.sign_distance_range.0..=cfg.sign_distance_range.1);
        let left = Vector3::new(-psi.sin(), psi.cos(), 0.0);
        let pos = p + left * (side * lateral);
        let (target, _) = path_point(length, s - FACING_LOOKBACK);
        let facing = (target - pos).normalize();
        let yaw = normalize_angle(yaw_from_normal(&facing) + rng.random_range(-YAW_JITTER..YAW_JITTER));
        let params = sample_params(*class, pos, yaw, rng);
        objects.push(GtObject { object_id: i as u64 + 1, class: *class, params });
    }
    objects
}

/// Generates a noiseless scene. The returned ground truth is also attached
/// to the scene.
pub fn generate_scene(cfg: &SynthConfig) -> Result<(Scene, GroundTruth), SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let objects = place_objects(cfg, &mut rng);
    render_scene(cfg, objects, &mut rng)
}

/// Observes `objects` from the configured trajectory: masks, keypoints on
/// the object surfaces and background ground points.
pub fn render_scene(cfg: &SynthConfig, objects: Vec<GtObject>, rng: &mut impl Rng) -> Result<(Scene, GroundTruth), SynthError> {
    cfg.validate()?;
    let frames = trajectory(cfg);
    let length = cfg.trajectory_length;
    let n_obj = objects.len();

    let mut observations = Vec::new();
    let mut obs_labels = Vec::new();
    let mut seen: Vec<Vec<u64>> = vec![Vec::new(); n_obj];
    let mut masks_by_frame: Vec<Vec<Polygon>> = Vec::with_capacity(frames.len());
    for frame in &frames {
        let mut cands: Vec<(f64, usize, Polygon)> = objects
            .iter()
            .enumerate()
            .filter_map(|(k, o)| {
                let mask = visible_outline(&o.params, frame)?;
                let depth = (o.params.center() - frame.camera_center()).norm();
                Some((depth, k, mask))
            })
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut kept: Vec<(usize, Polygon, Aabb2)> = Vec::new();
        for (_, k, mask) in cands {
            let b = Aabb2::from_points(&mask).expect("non-empty mask");
            if kept.iter().any(|(_, _, kb)| kb.intersects(&b)) {
                continue;
            }
            kept.push((k, mask, b));
        }
        kept.sort_by_key(|(k, _, _)| *k);
        let mut frame_masks = Vec::new();
        for (k, mask, b) in kept {
            let obs_id = observations.len() as u64 + 1;
            observations.push(InstanceObservation {
                obs_id,
                frame_id: frame.frame_id,
                class: objects[k].class,
                det_box: b,
                mask: mask.clone(),
            });
            obs_labels.push(GtObservationLabel { obs_id, object_id: objects[k].object_id, occluded: false });
            seen[k].push(frame.frame_id);
            frame_masks.push(mask);
        }
        masks_by_frame.push(frame_masks);
    }

    let mut map_points = Vec::new();
    let mut point_labels = Vec::new();
    let (kmin, kmax) = cfg.keypoints_per_object_range;
    for (k, o) in objects.iter().enumerate() {
        let n = rng.random_range(kmin..=kmax);
        for p in sample_surface(&o.params, n, rng) {
            let obs: Vec<KeypointObservation> = seen[k]
                .iter()
                .filter_map(|&fid| {
                    let pixel = frames[fid as usize].project(&p).ok()?;
                    Some(KeypointObservation { frame_id: fid, pixel })
                })
                .collect();
            if obs.len() < 2 {
                continue;
            }
            let point_id = map_points.len() as u64 + 1;
            map_points.push(SparseMapPoint { point_id, position: p, observations: obs });
            point_labels.push(GtPointLabel { point_id, object_id: o.object_id });
        }
    }

    for _ in 0..cfg.n_background_points {
        let s = rng.random_range(0.0..length * 1.1);
        let (p, psi) = path_point(length, s);
        let left = Vector3::new(-psi.sin(), psi.cos(), 0.0);
        let lateral = rng.random_range(2.0..15.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let pos = p + left * lateral;
        let obs: Vec<KeypointObservation> = frames
            .iter()
            .zip(&masks_by_frame)
            .filter_map(|(f, masks)| {
                let depth = f.world_from_camera.inverse_transform_point(&pos).z;
                if !(DEPTH_RANGE.0..=DEPTH_RANGE.1).contains(&depth) {
                    return None;
                }
                let pixel = f.project(&pos).ok()?;
                if !f.intrinsics.contains(&pixel, 0.0) {
                    return None;
                }
                if masks.iter().any(|m| crate::geometry::point_in_polygon(&pixel, m)) {
                    return None;
                }
                Some(KeypointObservation { frame_id: f.frame_id, pixel })
            })
            .collect();
        if obs.len() < 2 {
            continue;
        }
        let point_id = map_points.len() as u64 + 1;
        map_points.push(SparseMapPoint { point_id, position: pos, observations: obs });
    }

    let gt = GroundTruth { objects, observation_labels: obs_labels, point_labels };
    let scene = Scene::new(frames, map_points, observations, Some(gt.clone()))
        .map_err(|e| SynthError::Config(format!("generated scene failed validation: {e}")))?;
    Ok((scene, gt))
}

fn noise_stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667_f3bc_c908)
}

fn pick(n: usize, frac: f64, rng: &mut impl Rng) -> Vec<bool> {
    let k = ((n as f64) * frac).round() as usize;
    let mut out = vec![false; n];
    if k > 0 {
        for i in sample(rng, n, k.min(n)).into_iter() {
            out[i] = true;
        }
    }
    out
}

/// Applies pixel noise, vertex outliers, dropout and occluder cuts, in that
/// order, from a random stream derived from `cfg.seed`.
pub fn corrupt(scene: &Scene, cfg: &SynthConfig) -> Result<Scene, SynthError> {
    cfg.validate()?;
    let mut rng = noise_stream(cfg.seed);
    let (frames, mut points, mut observations, gt) = scene.clone().into_parts();
    let mut gt = gt.unwrap_or_default();

    if cfg.pixel_noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.pixel_noise_sigma).expect("validated sigma");
        for o in observations.iter_mut() {
            for v in o.mask.iter_mut() {
                v.x += normal.sample(&mut rng);
                v.y += normal.sample(&mut rng);
            }
        }
        for p in points.iter_mut() {
            for kp in p.observations.iter_mut() {
                kp.pixel.x += normal.sample(&mut rng);
                kp.pixel.y += normal.sample(&mut rng);
            }
        }
    }

    let n_vertices: usize = observations.iter().map(|o| o.mask.len()).sum();
    let outliers = pick(n_vertices, cfg.outlier_fraction, &mut rng);
    let mut idx = 0;
    for o in observations.iter_mut() {
        for v in o.mask.iter_mut() {
            if outliers[idx] {
                let ang = rng.random_range(0.0..2.0 * PI);
                v.x += cfg.outlier_magnitude * ang.cos();
                v.y += cfg.outlier_magnitude * ang.sin();
            }
            idx += 1;
        }
    }

    let perturbed = cfg.pixel_noise_sigma > 0.0 || cfg.outlier_fraction > 0.0;
    for o in observations.iter_mut() {
        if perturbed && !is_simple(&o.mask) {
            o.mask = convex_hull(&o.mask);
        }
        if perturbed {
            o.det_box = Aabb2::from_points(&o.mask).expect("non-empty mask");
        }
    }

    let dropped = pick(observations.len(), cfg.dropout_fraction, &mut rng);
    let mut keep = dropped.iter().map(|d| !d);
    observations.retain(|_| keep.next().unwrap());
    let live: std::collections::HashSet<u64> = observations.iter().map(|o| o.obs_id).collect();
    gt.observation_labels.retain(|l| live.contains(&l.obs_id));

    let occluded = pick(observations.len(), cfg.occluder_fraction, &mut rng);
    for (o, occ) in observations.iter_mut().zip(&occluded) {
        if !*occ {
            continue;
        }
        let keep_frac = rng.random_range(0.4..0.8);
        let horizontal = rng.random_bool(0.5);
        let from_low = rng.random_bool(0.5);
        let b = Aabb2::from_points(&o.mask).expect("non-empty mask");
        let (a, bpt) = cut_line(&b, keep_frac, horizontal, from_low);
        o.mask = clip_half_plane(&o.mask, &a, &bpt);
        if !is_simple(&o.mask) {
            o.mask = convex_hull(&o.mask);
        }
        if let Some(l) = gt.observation_labels.iter_mut().find(|l| l.obs_id == o.obs_id) {
            l.occluded = true;
        }
    }

    let has_gt = scene.ground_truth().is_some();
    Scene::new(frames, points, observations, if has_gt { Some(gt) } else { None })
        .map_err(|e| SynthError::Config(format!("corrupted scene failed validation: {e}")))
}

/// Directed line whose left side (counter-clockwise in (u, v)) keeps
/// `keep_frac` of the box extent along one axis.
fn cut_line(b: &Aabb2, keep_frac: f64, horizontal: bool, from_low: bool) -> (Point2<f64>, Point2<f64>) {
    if horizontal {
        let x = if from_low { b.min.x + keep_frac * b.width() } else { b.max.x - keep_frac * b.width() };
        let (lo, hi) = (Point2::new(x, b.min.y), Point2::new(x, b.max.y));
        if from_low {
            (lo, hi)
        } else {
            (hi, lo)
        }
    } else {
        let y = if from_low { b.min.y + keep_frac * b.height() } else { b.max.y - keep_frac * b.height() };
        let (lo, hi) = (Point2::new(b.min.x, y), Point2::new(b.max.x, y));
        if from_low {
            (hi, lo)
        } else {
            (lo, hi)
        }
    }
}

/// Generates and corrupts in one step.
pub fn generate_noisy_scene(cfg: &SynthConfig) -> Result<Scene, SynthError> {
    let (scene, _) = generate_scene(cfg)?;
    corrupt(&scene, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proposal::occlusion_ratio;
    use crate::scene::save_scene;

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SynthConfig { pixel_noise_sigma: 0.5, outlier_fraction: 0.05, occluder_fraction: 0.1, ..Default::default() };
        let a = save_scene(&generate_noisy_scene(&cfg).unwrap());
        let b = save_scene(&generate_noisy_scene(&cfg).unwrap());
        assert_eq!(a, b);
        let c = save_scene(&generate_noisy_scene(&SynthConfig { seed: 43, ..cfg }).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_masks_are_exact_projections() {
        let (scene, gt) = generate_scene(&SynthConfig::default()).unwrap();
        let of = gt.object_of_observation();
        for o in scene.observations() {
            let obj = gt.objects.iter().find(|g| g.object_id == of[&o.obs_id]).unwrap();
            let frame = scene.frame(o.frame_id).unwrap();
            let model: Vec<Point2<f64>> = obj.params.outline_points().iter().map(|p| frame.project(p).unwrap()).collect();
            for v in &o.mask {
                assert!(model.iter().any(|m| (m - v).norm() < 1e-9), "obs {}", o.obs_id);
            }
            assert_eq!(occlusion_ratio(o), 1.0);
        }
        for l in &gt.point_labels {
            let p = scene.map_point(l.point_id).unwrap();
            for kp in &p.observations {
                let px = scene.frame(kp.frame_id).unwrap().project(&p.position).unwrap();
                assert_eq!(px, kp.pixel);
            }
        }
    }

    #[test]
    fn single_sign() {
        let cfg = SynthConfig { n_signs: 1, n_lights: 0, n_circles: 0, n_cones: 0, n_frames: 20, ..Default::default() };
        let (scene, gt) = generate_scene(&cfg).unwrap();
        assert_eq!(gt.objects.len(), 1);
        assert!(scene.observations().len() <= 20);
        assert_eq!(scene.frames().len(), 20);
    }

    #[test]
    fn clean_corrupt_is_identity() {
        let (scene, _) = generate_scene(&SynthConfig::default()).unwrap();
        let again = corrupt(&scene, &SynthConfig::default()).unwrap();
        assert_eq!(save_scene(&scene), save_scene(&again));
    }

    #[test]
    fn noise_has_configured_std() {
        let cfg = SynthConfig { pixel_noise_sigma: 0.5, ..Default::default() };
        let (scene, _) = generate_scene(&cfg).unwrap();
        let noisy = corrupt(&scene, &cfg).unwrap();
        let mut deltas = Vec::new();
        for (a, b) in scene.observations().iter().zip(noisy.observations()) {
            let same_order = a.mask.len() == b.mask.len() && a.mask.iter().zip(&b.mask).all(|(p, q)| (p - q).norm() < 3.0);
            if same_order {
                for (p, q) in a.mask.iter().zip(&b.mask) {
                    deltas.push(q.x - p.x);
                    deltas.push(q.y - p.y);
                }
            }
        }
        for (a, b) in scene.map_points().iter().zip(noisy.map_points()) {
            for (p, q) in a.observations.iter().zip(&b.observations) {
                deltas.push(q.pixel.x - p.pixel.x);
                deltas.push(q.pixel.y - p.pixel.y);
            }
        }
        assert!(deltas.len() >= 10_000, "{}", deltas.len());
        let n = deltas.len() as f64;
        let mean = deltas.iter().sum::<f64>() / n;
        let std = (deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - 0.5).abs() < 0.05, "{std}");
    }

    #[test]
    fn occluders_match_flags() {
        let cfg = SynthConfig { occluder_fraction: 0.3, ..Default::default() };
        let (scene, _) = generate_scene(&cfg).unwrap();
        let noisy = corrupt(&scene, &cfg).unwrap();
        let flagged = noisy.ground_truth().unwrap().occluded_observations();
        let expect = (scene.observations().len() as f64 * 0.3).round() as usize;
        assert_eq!(flagged.len(), expect);
        for o in noisy.observations() {
            let r = occlusion_ratio(o);
            assert_eq!(r < 1.0, flagged.contains(&o.obs_id), "obs {} ratio {r}", o.obs_id);
            if r < 1.0 {
                assert!((0.4 - 1e-9..=0.8 + 1e-9).contains(&r));
            }
        }
    }

    #[test]
    fn dropout_removes_exact_count() {
        let cfg = SynthConfig { dropout_fraction: 0.2, ..Default::default() };
        let (scene, _) = generate_scene(&cfg).unwrap();
        let noisy = corrupt(&scene, &cfg).unwrap();
        let n = scene.observations().len();
        assert_eq!(noisy.observations().len(), n - (n as f64 * 0.2).round() as usize);
        assert_eq!(noisy.ground_truth().unwrap().observation_labels.len(), noisy.observations().len());
    }

    #[test]
    fn rejects_bad_fractions() {
        for cfg in [
            SynthConfig { outlier_fraction: 1.5, ..Default::default() },
            SynthConfig { dropout_fraction: -0.1, ..Default::default() },
            SynthConfig { n_frames: 0, ..Default::default() },
            SynthConfig { keypoints_per_object_range: (5, 2), ..Default::default() },
        ] {
            assert!(matches!(generate_scene(&cfg), Err(SynthError::Config(_))));
        }
    }

    #[test]
    fn heavy_corruption_keeps_masks_valid() {
        let (scene, _) = crate::testutil::noiseless();
        for seed in 0..40 {
            let cfg = SynthConfig {
                pixel_noise_sigma: 1.0,
                outlier_fraction: 0.2,
                occluder_fraction: 0.5,
                dropout_fraction: 0.1,
                seed,
                ..Default::default()
            };
            let out = corrupt(scene, &cfg).unwrap();
            assert!(out.observations().iter().all(|o| is_simple(&o.mask)));
        }
    }
}
