//! Consistency evaluation: Hungarian matching of projected annotations
//! against 2D reference elements and of 3D centers against references.

pub mod hungarian;

use std::collections::BTreeMap;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

pub use hungarian::hungarian;

use crate::geometry::{convex_hull, convex_polygon_iou, Aabb2, DEFAULT_MIN_DEPTH};
use crate::scene::{CameraFrame, ObjectClass, StaticAnnotation};

/// Cost of pairing elements of different classes.
pub const SENTINEL_COST: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// Meters.
    pub center_dist_threshold: f64,
    /// Frames whose paired-sweep offset exceeds this many milliseconds are
    /// skipped. Off when `None`.
    pub timestamp_filter_ms: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { iou_threshold: 0.5, center_dist_threshold: 1.0, timestamp_filter_ms: None }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(format!("iou_threshold must lie in (0, 1), got {}", self.iou_threshold));
        }
        if !(self.center_dist_threshold > 0.0) {
            return Err(format!("center_dist_threshold must be positive, got {}", self.center_dist_threshold));
        }
        if let Some(ms) = self.timestamp_filter_ms {
            if !(ms >= 0.0) {
                return Err(format!("timestamp_filter_ms must be non-negative, got {ms}"));
            }
        }
        Ok(())
    }

    /// Whether `frame` takes part in evaluation under the timestamp filter.
    pub fn keeps_frame(&self, frame: &CameraFrame) -> bool {
        match (self.timestamp_filter_ms, frame.paired_timestamp_offset_us) {
            (Some(ms), Some(off)) => (off.unsigned_abs() as f64) <= ms * 1000.0,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub precision: f64,
    pub recall: f64,
    /// Pixels for 2D evaluation, meters for 3D.
    pub mean_error: f64,
    pub n_matched: usize,
    pub n_pred: usize,
    pub n_ref: usize,
}

impl EvalResult {
    pub fn from_counts(n_matched: usize, n_pred: usize, n_ref: usize, error_sum: f64) -> EvalResult {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        EvalResult {
            precision: ratio(n_matched, n_pred),
            recall: ratio(n_matched, n_ref),
            mean_error: if n_matched == 0 { 0.0 } else { error_sum / n_matched as f64 },
            n_matched,
            n_pred,
            n_ref,
        }
    }
}

/// A 2D element in one frame: convex outline and keypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageElement {
    pub frame_id: u64,
    pub id: u64,
    pub class: ObjectClass,
    pub polygon: Vec<Point2<f64>>,
    pub keypoints: Vec<Point2<f64>>,
}

/// Projects `annotation` into `frame`; `None` unless every box vertex is in
/// front of the camera and the outline overlaps the image.
pub fn project_annotation(annotation: &StaticAnnotation, frame: &CameraFrame) -> Option<ImageElement> {
    let project_all = |pts: Vec<nalgebra::Vector3<f64>>| -> Option<Vec<Point2<f64>>> {
        pts.iter()
            .map(|p| {
                crate::geometry::project_with_min_depth(&frame.intrinsics, &frame.world_from_camera, p, DEFAULT_MIN_DEPTH).ok()
            })
            .collect()
    };
    let keypoints = project_all(annotation.params.box_vertices())?;
    let outline = project_all(annotation.params.outline_points())?;
    let polygon = convex_hull(&outline);
    let b = Aabb2::from_points(&polygon)?;
    let image = Aabb2 {
        min: Point2::new(0.0, 0.0),
        max: Point2::new(frame.intrinsics.width as f64, frame.intrinsics.height as f64),
    };
    if polygon.len() < 3 || !b.intersects(&image) {
        return None;
    }
    Some(ImageElement { frame_id: frame.frame_id, id: annotation.annotation_id, class: annotation.class, polygon, keypoints })
}

/// Projected elements of all annotations in all frames kept by `cfg`.
pub fn project_annotations(annotations: &[StaticAnnotation], frames: &[CameraFrame], cfg: &EvalConfig) -> Vec<ImageElement> {
    let mut frames: Vec<&CameraFrame> = frames.iter().filter(|f| cfg.keeps_frame(f)).collect();
    frames.sort_by_key(|f| f.frame_id);
    frames.iter().flat_map(|f| annotations.iter().filter_map(|a| project_annotation(a, f))).collect()
}

/// Mean pixel distance between keypoints under their optimal correspondence.
pub fn keypoint_error(a: &[Point2<f64>], b: &[Point2<f64>]) -> f64 {
    let cost: Vec<Vec<f64>> = a.iter().map(|p| b.iter().map(|q| (p - q).norm()).collect()).collect();
    let pairs = hungarian(&cost);
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().map(|&(i, j)| cost[i][j]).sum::<f64>() / pairs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEval {
    pub frame_id: u64,
    pub n_matched: usize,
    pub n_pred: usize,
    pub n_ref: usize,
    pub error_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eval2dReport {
    pub result: EvalResult,
    pub per_frame: Vec<FrameEval>,
}

fn match_frame(pred: &[&ImageElement], refs: &[&ImageElement], cfg: &EvalConfig) -> (usize, f64) {
    if pred.is_empty() || refs.is_empty() {
        return (0, 0.0);
    }
    let ious: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| {
            refs.iter()
                .map(|r| if p.class == r.class { convex_polygon_iou(&p.polygon, &r.polygon).unwrap_or(0.0) } else { -1.0 })
                .collect()
        })
        .collect();
    let cost: Vec<Vec<f64>> =
        ious.iter().map(|row| row.iter().map(|&iou| if iou < 0.0 { SENTINEL_COST } else { 1.0 - iou }).collect()).collect();
    let mut matched = 0;
    let mut err = 0.0;
    for (i, j) in hungarian(&cost) {
        if ious[i][j] >= cfg.iou_threshold {
            matched += 1;
            err += keypoint_error(&pred[i].keypoints, &refs[j].keypoints);
        }
    }
    (matched, err)
}

fn group_by_frame(els: &[ImageElement]) -> BTreeMap<u64, Vec<&ImageElement>> {
    let mut m: BTreeMap<u64, Vec<&ImageElement>> = BTreeMap::new();
    for e in els {
        m.entry(e.frame_id).or_default().push(e);
    }
    for v in m.values_mut() {
        v.sort_by_key(|e| e.id);
    }
    m
}

/// Per-frame Hungarian matching on `1 − IoU`; matches need IoU at least the
/// threshold. The error is the mean keypoint distance over matched pairs.
pub fn eval_2d(pred: &[ImageElement], refs: &[ImageElement], frames: &[CameraFrame], cfg: &EvalConfig) -> Eval2dReport {
    let mut frame_ids: Vec<u64> = frames.iter().filter(|f| cfg.keeps_frame(f)).map(|f| f.frame_id).collect();
    frame_ids.sort_unstable();
    let (pm, rm) = (group_by_frame(pred), group_by_frame(refs));
    let empty = Vec::new();
    let mut per_frame = Vec::new();
    let (mut nm, mut np, mut nr, mut es) = (0, 0, 0, 0.0);
    for f in frame_ids {
        let p = pm.get(&f).unwrap_or(&empty);
        let r = rm.get(&f).unwrap_or(&empty);
        let (m, e) = match_frame(p, r, cfg);
        nm += m;
        np += p.len();
        nr += r.len();
        es += e;
        per_frame.push(FrameEval { frame_id: f, n_matched: m, n_pred: p.len(), n_ref: r.len(), error_sum: e });
    }
    Eval2dReport { result: EvalResult::from_counts(nm, np, nr, es), per_frame }
}

/// Projects both annotation sets and runs [`eval_2d`].
pub fn eval_2d_annotations(
    pred: &[StaticAnnotation],
    refs: &[StaticAnnotation],
    frames: &[CameraFrame],
    cfg: &EvalConfig,
) -> Eval2dReport {
    eval_2d(&project_annotations(pred, frames, cfg), &project_annotations(refs, frames, cfg), frames, cfg)
}

/// Hungarian matching on center distance; matches need distance at most
/// `center_dist_threshold`.
pub fn eval_3d(pred: &[StaticAnnotation], refs: &[StaticAnnotation], cfg: &EvalConfig) -> EvalResult {
    let mut pred: Vec<&StaticAnnotation> = pred.iter().collect();
    let mut refs: Vec<&StaticAnnotation> = refs.iter().collect();
    pred.sort_by_key(|a| a.annotation_id);
    refs.sort_by_key(|a| a.annotation_id);
    let dist: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| {
            refs.iter()
                .map(|r| if p.class == r.class { (p.params.center() - r.params.center()).norm() } else { SENTINEL_COST })
                .collect()
        })
        .collect();
    let mut matched = 0;
    let mut err = 0.0;
    for (i, j) in hungarian(&dist) {
        if pred[i].class == refs[j].class && dist[i][j] <= cfg.center_dist_threshold {
            matched += 1;
            err += dist[i][j];
        }
    }
    EvalResult::from_counts(matched, pred.len(), refs.len(), err)
}

/// Matched pairs `(pred annotation id, ref annotation id)` of [`eval_3d`].
pub fn match_3d(pred: &[StaticAnnotation], refs: &[StaticAnnotation], cfg: &EvalConfig) -> Vec<(u64, u64)> {
    let dist: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| {
            refs.iter()
                .map(|r| if p.class == r.class { (p.params.center() - r.params.center()).norm() } else { SENTINEL_COST })
                .collect()
        })
        .collect();
    hungarian(&dist)
        .into_iter()
        .filter(|&(i, j)| pred[i].class == refs[j].class && dist[i][j] <= cfg.center_dist_threshold)
        .map(|(i, j)| (pred[i].annotation_id, refs[j].annotation_id))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub eval_2d: EvalResult,
    pub eval_3d: EvalResult,
    pub per_frame: Vec<FrameEval>,
}

pub fn evaluate(pred: &[StaticAnnotation], refs: &[StaticAnnotation], frames: &[CameraFrame], cfg: &EvalConfig) -> EvalReport {
    let r2 = eval_2d_annotations(pred, refs, frames, cfg);
    EvalReport { eval_2d: r2.result, eval_3d: eval_3d(pred, refs, cfg), per_frame: r2.per_frame }
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector3;

    use super::*;
    use crate::geometry::{RectSignParams, ShapeParams};
    use crate::testutil::noiseless;

    fn rect(u0: f64, v0: f64, u1: f64, v1: f64) -> Vec<Point2<f64>> {
        vec![Point2::new(u0, v0), Point2::new(u1, v0), Point2::new(u1, v1), Point2::new(u0, v1)]
    }

    fn el(id: u64, class: ObjectClass, polygon: Vec<Point2<f64>>) -> ImageElement {
        ImageElement { frame_id: 0, id, class, keypoints: polygon.clone(), polygon }
    }

    fn sign(id: u64, x: f64) -> StaticAnnotation {
        let p = ShapeParams::Rect(RectSignParams { center: Vector3::new(x, 5.0, 2.5), yaw: 0.0, width: 1.0, height: 1.0 });
        StaticAnnotation::new(id, id, ObjectClass::Guideboard, p)
    }

    fn frames() -> Vec<CameraFrame> {
        let mut f = noiseless().0.frames()[0].clone();
        f.frame_id = 0;
        vec![f]
    }

    #[test]
    fn identical_sets_score_perfectly() {
        let (scene, gt) = noiseless();
        let a = gt.to_annotations();
        let r = eval_2d_annotations(&a, &a, scene.frames(), &EvalConfig::default()).result;
        assert_eq!((r.precision, r.recall, r.mean_error), (1.0, 1.0, 0.0));
        assert!(r.n_matched > 0);
        let r3 = eval_3d(&a, &a, &EvalConfig::default());
        assert_eq!((r3.precision, r3.recall, r3.mean_error, r3.n_matched), (1.0, 1.0, 0.0, a.len()));
    }

    #[test]
    fn empty_sides() {
        let refs = vec![el(1, ObjectClass::Guideboard, rect(0.0, 0.0, 10.0, 10.0))];
        let cfg = EvalConfig::default();
        let r = eval_2d(&[], &refs, &frames(), &cfg).result;
        assert_eq!((r.precision, r.recall, r.n_ref), (0.0, 0.0, 1));
        let r = eval_2d(&[], &[], &frames(), &cfg).result;
        assert_eq!((r.precision, r.recall, r.n_matched), (0.0, 0.0, 0));
    }

    #[test]
    fn swapping_sides_swaps_precision_and_recall() {
        let pred = vec![
            el(1, ObjectClass::Guideboard, rect(0.0, 0.0, 10.0, 10.0)),
            el(2, ObjectClass::Guideboard, rect(100.0, 0.0, 110.0, 10.0)),
            el(3, ObjectClass::TrafficLight, rect(200.0, 0.0, 210.0, 10.0)),
        ];
        let refs = vec![el(7, ObjectClass::Guideboard, rect(1.0, 0.0, 11.0, 10.0)), el(8, ObjectClass::TrafficLight, rect(200.0, 1.0, 210.0, 11.0))];
        let cfg = EvalConfig::default();
        let ab = eval_2d(&pred, &refs, &frames(), &cfg).result;
        let ba = eval_2d(&refs, &pred, &frames(), &cfg).result;
        assert_eq!(ab.n_matched, 2);
        assert_eq!((ab.precision, ab.recall), (ba.recall, ba.precision));
        assert!((ab.mean_error - ba.mean_error).abs() < 1e-12);
        assert!((ab.mean_error - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_at_threshold_matches() {
        let pred = vec![el(1, ObjectClass::Guideboard, rect(0.0, 0.0, 2.0, 1.0))];
        let refs = vec![el(2, ObjectClass::Guideboard, rect(0.0, 0.0, 1.0, 1.0))];
        let at = EvalConfig { iou_threshold: 0.5, ..Default::default() };
        assert_eq!(eval_2d(&pred, &refs, &frames(), &at).result.n_matched, 1);
        let above = EvalConfig { iou_threshold: 0.5 + 1e-9, ..Default::default() };
        assert_eq!(eval_2d(&pred, &refs, &frames(), &above).result.n_matched, 0);
    }

    #[test]
    fn classes_never_match() {
        let pred = vec![el(1, ObjectClass::Guideboard, rect(0.0, 0.0, 10.0, 10.0))];
        let refs = vec![el(2, ObjectClass::TrafficLight, rect(0.0, 0.0, 10.0, 10.0))];
        assert_eq!(eval_2d(&pred, &refs, &frames(), &EvalConfig::default()).result.n_matched, 0);
        let mut other = sign(9, 0.0);
        other.class = ObjectClass::TrafficLight;
        assert_eq!(eval_3d(&[sign(1, 0.0)], &[other], &EvalConfig::default()).n_matched, 0);
    }

    #[test]
    fn center_offset_against_threshold() {
        let cfg = EvalConfig::default();
        let r = eval_3d(&[sign(1, 0.0)], &[sign(2, 2.0)], &cfg);
        assert_eq!((r.n_matched, r.precision, r.recall), (0, 0.0, 0.0));
        let loose = EvalConfig { center_dist_threshold: 3.0, ..cfg };
        let r = eval_3d(&[sign(1, 0.0)], &[sign(2, 2.0)], &loose);
        assert_eq!(r.n_matched, 1);
        assert!((r.mean_error - 2.0).abs() < 1e-12);
        assert_eq!(match_3d(&[sign(1, 0.0)], &[sign(2, 2.0)], &loose), vec![(1, 2)]);
    }

    #[test]
    fn precision_and_recall_conventions() {
        let pred = [sign(1, 0.0), sign(2, 10.0), sign(3, 20.0), sign(4, 50.0)];
        let refs = [sign(5, 0.1), sign(6, 10.1), sign(7, 20.1)];
        let r = eval_3d(&pred, &refs, &EvalConfig::default());
        assert_eq!(r.n_matched, 3);
        assert_eq!((r.precision, r.recall), (0.75, 1.0));
    }

    #[test]
    fn timestamp_filter_drops_frames() {
        let mut fs = frames();
        fs[0].paired_timestamp_offset_us = Some(-20_000);
        let els = vec![el(1, ObjectClass::Guideboard, rect(0.0, 0.0, 10.0, 10.0))];
        let cfg = EvalConfig { timestamp_filter_ms: Some(10.0), ..Default::default() };
        let r = eval_2d(&els, &els, &fs, &cfg);
        assert!(r.per_frame.is_empty());
        assert_eq!(r.result.n_ref, 0);
        let cfg = EvalConfig { timestamp_filter_ms: Some(20.0), ..Default::default() };
        assert_eq!(eval_2d(&els, &els, &fs, &cfg).result.n_matched, 1);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(EvalConfig { iou_threshold: 1.0, ..Default::default() }.validate().is_err());
        assert!(EvalConfig { center_dist_threshold: 0.0, ..Default::default() }.validate().is_err());
        assert!(EvalConfig { timestamp_filter_ms: Some(-1.0), ..Default::default() }.validate().is_err());
    }

    fn arb_elements() -> impl proptest::strategy::Strategy<Value = Vec<ImageElement>> {
        use proptest::prelude::*;
        prop::collection::vec((0.0..100.0f64, 0.0..100.0f64, 1.0..30.0f64, prop::bool::ANY), 0..6).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (u, w, s, light))| {
                    let class = if light { ObjectClass::TrafficLight } else { ObjectClass::Guideboard };
                    el(i as u64, class, rect(u, w, u + s, w + s))
                })
                .collect()
        })
    }

    proptest::proptest! {
        #[test]
        fn bounds_and_symmetry_hold_everywhere(pred in arb_elements(), refs in arb_elements()) {
            let fs = frames();
            let cfg = EvalConfig::default();
            let ab = eval_2d(&pred, &refs, &fs, &cfg).result;
            let ba = eval_2d(&refs, &pred, &fs, &cfg).result;
            for r in [&ab, &ba] {
                proptest::prop_assert!((0.0..=1.0).contains(&r.precision) && (0.0..=1.0).contains(&r.recall));
                proptest::prop_assert!(r.n_matched <= r.n_pred.min(r.n_ref));
                proptest::prop_assert!(r.mean_error >= 0.0);
            }
            proptest::prop_assert_eq!((ab.precision, ab.recall, ab.n_matched), (ba.recall, ba.precision, ba.n_matched));
        }
    }
}
