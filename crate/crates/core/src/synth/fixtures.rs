//! Constructed scenes for the track merge and split stages.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{place_objects, render_scene, SynthConfig, SynthError};
use crate::geometry::{RectSignParams, ShapeParams};
use crate::scene::{GroundTruth, GtObject, GtPointLabel, KeypointObservation, ObjectClass, Scene, SparseMapPoint};

fn rebuild(scene: &Scene, points: Vec<SparseMapPoint>, gt: GroundTruth) -> Result<(Scene, GroundTruth), SynthError> {
    let (frames, _, observations, _) = scene.clone().into_parts();
    let scene = Scene::new(frames, points, observations, Some(gt.clone()))
        .map_err(|e| SynthError::Config(format!("fixture failed validation: {e}")))?;
    Ok((scene, gt))
}

/// Scene in which the keypoints of object `object_id` are re-identified
/// halfway through its observations, so point-based grouping yields two
/// disjoint tracks of the same object.
pub fn duplicate_track_scene(cfg: &SynthConfig, object_id: u64) -> Result<(Scene, GroundTruth), SynthError> {
    let (scene, mut gt) = super::generate_scene(cfg)?;
    let owner = gt.object_of_point();
    let frames: Vec<u64> = {
        let by_obs = gt.object_of_observation();
        scene.observations().iter().filter(|o| by_obs.get(&o.obs_id) == Some(&object_id)).map(|o| o.frame_id).collect()
    };
    if frames.len() < 4 {
        return Err(SynthError::Config(format!("object {object_id} has only {} observations", frames.len())));
    }
    let cut = frames[frames.len() / 2];
    let mut next_id = scene.map_points().iter().map(|p| p.point_id).max().unwrap_or(0) + 1;
    let mut points = Vec::new();
    for p in scene.map_points() {
        if owner.get(&p.point_id) != Some(&object_id) {
            points.push(p.clone());
            continue;
        }
        let (early, late): (Vec<KeypointObservation>, Vec<KeypointObservation>) =
            p.observations.iter().partition(|kp| kp.frame_id < cut);
        if early.len() < 2 || late.len() < 2 {
            points.push(p.clone());
            continue;
        }
        points.push(SparseMapPoint { point_id: p.point_id, position: p.position, observations: early });
        points.push(SparseMapPoint { point_id: next_id, position: p.position, observations: late });
        gt.point_labels.push(GtPointLabel { point_id: next_id, object_id });
        next_id += 1;
    }
    rebuild(&scene, points, gt)
}

/// Scene with two adjacent rectangular signs detected as separate masks
/// whose keypoints are chained into one cluster by mismatched points.
pub fn stitched_pair_scene(cfg: &SynthConfig) -> Result<(Scene, GroundTruth), SynthError> {
    let base = SynthConfig { n_signs: 1, n_lights: 0, n_circles: 0, n_cones: 0, ..cfg.clone() };
    base.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed);
    let placed = place_objects(&base, &mut rng);
    let ShapeParams::Rect(a) = placed[0].params else {
        return Err(SynthError::Config("expected a rectangular sign".into()));
    };
    let axis = Vector3::new(a.yaw.cos(), a.yaw.sin(), 0.0);
    let b = RectSignParams { center: a.center + axis * (a.width + 0.3), ..a };
    let objects = vec![
        GtObject { object_id: 1, class: ObjectClass::Guideboard, params: ShapeParams::Rect(a) },
        GtObject { object_id: 2, class: ObjectClass::Guideboard, params: ShapeParams::Rect(b) },
    ];
    let (scene, gt) = render_scene(&base, objects, &mut rng)?;
    let by_obs = gt.object_of_observation();
    let seen = |obj: u64| -> Vec<u64> {
        scene.observations().iter().filter(|o| by_obs.get(&o.obs_id) == Some(&obj)).map(|o| o.frame_id).collect()
    };
    let both: Vec<u64> = seen(1).into_iter().filter(|f| seen(2).contains(f)).collect();
    if both.len() < 4 {
        return Err(SynthError::Config("signs are not co-visible".into()));
    }
    let mut points: Vec<SparseMapPoint> = scene.map_points().to_vec();
    let mut next_id = points.iter().map(|p| p.point_id).max().unwrap_or(0) + 1;
    let offset = b.center - a.center;
    for k in 0..3 {
        let pos = a.center + axis * (a.width * (0.1 + 0.1 * k as f64)) + Vector3::new(0.0, 0.0, 0.1 * k as f64);
        let observations: Vec<KeypointObservation> = both
            .iter()
            .enumerate()
            .filter_map(|(i, &fid)| {
                let frame = scene.frame(fid)?;
                // mismatched in every other frame: the keypoint lands on the twin sign
                let target = if i % 2 == 0 { pos } else { pos + offset };
                Some(KeypointObservation { frame_id: fid, pixel: frame.project(&target).ok()? })
            })
            .collect();
        points.push(SparseMapPoint { point_id: next_id, position: pos, observations });
        next_id += 1;
    }
    rebuild(&scene, points, gt)
}
