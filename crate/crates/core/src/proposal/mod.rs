//! Initial 3D parameters for a track: mask vertex extraction, occlusion
//! gating, multi-view triangulation and circle fitting.

mod circle;
mod vertices;

use nalgebra::{DMatrix, Point2, Vector3};
use serde::{Deserialize, Serialize};

pub use circle::{fit_circle_params, fit_circle_to_points, fit_plane};
pub use vertices::{
    angular_contour_samples, extract_mask_vertices, occlusion_gate, occlusion_ratio, ordered_corners,
    vertex_observation, VertexObservation, CIRCLE_CONTOUR_BINS,
};

use crate::geometry::shapes::{front_normal, normalize_angle};
use crate::geometry::{CuboidParams, RectSignParams};
use crate::optimize::FitObservation;
use crate::scene::CameraFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalParams {
    pub a_th: f64,
    pub min_views: usize,
    /// Radians.
    pub min_parallax: f64,
    pub min_contour_points: usize,
}

impl Default for ProposalParams {
    fn default() -> Self {
        ProposalParams { a_th: 0.95, min_views: 2, min_parallax: 0.0175, min_contour_points: 12 }
    }
}

impl ProposalParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.a_th > 0.0 && self.a_th <= 1.0) {
            return Err(format!("a_th must lie in (0, 1], got {}", self.a_th));
        }
        if self.min_views < 2 {
            return Err(format!("min_views must be at least 2, got {}", self.min_views));
        }
        if !(self.min_parallax >= 0.0) {
            return Err(format!("min_parallax must be non-negative, got {}", self.min_parallax));
        }
        if self.min_contour_points < 3 {
            return Err(format!("min_contour_points must be at least 3, got {}", self.min_contour_points));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProposalError {
    #[error("degenerate mask: {0}")]
    DegenerateMask(String),
    #[error("insufficient parallax ({0:.5} rad)")]
    InsufficientParallax(f64),
    #[error("triangulated point behind camera in frame {0}")]
    BehindCamera(u64),
    #[error("insufficient observations: need {needed}, got {got}")]
    InsufficientObservations { needed: usize, got: usize },
    #[error("degenerate plane fit")]
    DegeneratePlane,
}

/// Largest angle between any two viewing rays.
pub fn max_parallax(views: &[(&CameraFrame, Point2<f64>)]) -> f64 {
    let rays: Vec<Vector3<f64>> = views.iter().map(|(f, p)| f.ray(p)).collect();
    let mut best: f64 = 0.0;
    for i in 0..rays.len() {
        for j in i + 1..rays.len() {
            best = best.max(rays[i].angle(&rays[j]));
        }
    }
    best
}

/// Linear multi-view triangulation (DLT on normalized image coordinates).
pub fn triangulate_point(
    views: &[(&CameraFrame, Point2<f64>)],
    params: &ProposalParams,
) -> Result<Vector3<f64>, ProposalError> {
    if views.len() < params.min_views.max(2) {
        return Err(ProposalError::InsufficientObservations { needed: params.min_views.max(2), got: views.len() });
    }
    let parallax = max_parallax(views);
    if parallax < params.min_parallax || parallax == 0.0 {
        return Err(ProposalError::InsufficientParallax(parallax));
    }
    let origin = views.iter().map(|(f, _)| f.camera_center()).sum::<Vector3<f64>>() / views.len() as f64;
    let mut a = DMatrix::<f64>::zeros(2 * views.len(), 4);
    for (i, (frame, px)) in views.iter().enumerate() {
        let xn = frame.intrinsics.backproject(px);
        let rt = frame.world_from_camera.rotation_matrix().transpose();
        let t = -(rt * (frame.camera_center() - origin));
        let row = |k: usize| [rt[(k, 0)], rt[(k, 1)], rt[(k, 2)], t[k]];
        let (p1, p2, p3) = (row(0), row(1), row(2));
        for c in 0..4 {
            a[(2 * i, c)] = xn.x * p3[c] - p1[c];
            a[(2 * i + 1, c)] = xn.y * p3[c] - p2[c];
        }
        for r in [2 * i, 2 * i + 1] {
            let n = a.row(r).norm();
            if n > 0.0 {
                a.row_mut(r).scale_mut(1.0 / n);
            }
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let k = svd.singular_values.imin();
    let h = v_t.row(k);
    if h[3].abs() < 1e-12 {
        return Err(ProposalError::InsufficientParallax(parallax));
    }
    let p = Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]) + origin;
    for (frame, _) in views {
        let depth = frame.world_from_camera.inverse_transform_point(&p).z;
        if depth <= 0.0 {
            return Err(ProposalError::BehindCamera(frame.frame_id));
        }
    }
    Ok(p)
}

fn usable<'a>(obs: &[FitObservation<'a>], params: &ProposalParams) -> Result<Vec<FitObservation<'a>>, ProposalError> {
    let keep: Vec<FitObservation> = obs.iter().filter(|o| !o.vertices.occluded && o.vertices.corners.len() == 4).copied().collect();
    if keep.len() < params.min_views {
        return Err(ProposalError::InsufficientObservations { needed: params.min_views, got: keep.len() });
    }
    Ok(keep)
}

fn triangulate_corners(obs: &[(FitObservation, bool)], params: &ProposalParams) -> Result<[Vector3<f64>; 4], ProposalError> {
    let mut out = [Vector3::zeros(); 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let views: Vec<(&CameraFrame, Point2<f64>)> = obs
            .iter()
            .map(|(o, mirror)| (o.frame, o.vertices.corners[if *mirror { 3 - k } else { k }]))
            .collect();
        *slot = triangulate_point(&views, params)?;
    }
    Ok(out)
}

fn rect_from_corners(c: &[Vector3<f64>; 4]) -> RectSignParams {
    let center = (c[0] + c[1] + c[2] + c[3]) / 4.0;
    let bottom = c[3] - c[0];
    let top = c[2] - c[1];
    let e = (bottom + top) / 2.0;
    let yaw = normalize_angle(e.y.atan2(e.x));
    let width = (bottom.norm() + top.norm()) / 2.0;
    let height = ((c[1] - c[0]).norm() + (c[2] - c[3]).norm()) / 2.0;
    RectSignParams { center, yaw, width, height }
}

/// Triangulates the four labelled corners across the unoccluded views and
/// derives center, yaw and size. Views from the minority side of the
/// estimated plane are mirrored and the corners re-triangulated.
pub fn init_rect_proposal(obs: &[FitObservation], params: &ProposalParams) -> Result<RectSignParams, ProposalError> {
    let keep = usable(obs, params)?;
    let mut labelled: Vec<(FitObservation, bool)> = keep.iter().map(|o| (*o, false)).collect();
    let mut rect = rect_from_corners(&triangulate_corners(&labelled, params)?);
    let n = front_normal(rect.yaw);
    let front: Vec<bool> = keep.iter().map(|o| (o.frame.camera_center() - rect.center).dot(&n) >= 0.0).collect();
    let n_front = front.iter().filter(|&&f| f).count();
    if n_front != keep.len() && n_front != 0 {
        let majority_front = 2 * n_front >= keep.len();
        for (l, f) in labelled.iter_mut().zip(&front) {
            l.1 = *f != majority_front;
        }
        rect = rect_from_corners(&triangulate_corners(&labelled, params)?);
    }
    Ok(rect)
}

/// Minimum initial depth of a box-shaped object, meters.
pub const MIN_CUBOID_DEPTH: f64 = 0.05;

/// Box from the support points when their footprint is two-dimensional:
/// the minimum-area rectangle of the horizontal footprint, labelled so its
/// yaw is closest to the silhouette estimate, and the vertical point spread.
/// Otherwise the silhouette rectangle with depth from the spread of the
/// support points along the front normal, floored at [`MIN_CUBOID_DEPTH`].
pub fn init_cuboid_proposal(
    obs: &[FitObservation],
    support_points: &[Vector3<f64>],
    params: &ProposalParams,
) -> Result<CuboidParams, ProposalError> {
    let rect = init_rect_proposal(obs, params)?;
    if let Some(b) = footprint_box(support_points, rect.yaw) {
        return Ok(b);
    }
    let n = front_normal(rect.yaw);
    let offsets: Vec<f64> = support_points.iter().map(|p| (p - rect.center).dot(&n)).collect();
    let (lo, hi) = offsets.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let (depth, shift) = if offsets.is_empty() { (MIN_CUBOID_DEPTH, 0.0) } else { ((hi - lo).max(MIN_CUBOID_DEPTH), (hi + lo) / 2.0) };
    Ok(CuboidParams { center: rect.center + n * shift, yaw: rect.yaw, width: rect.width, height: rect.height, depth })
}

fn footprint_box(points: &[Vector3<f64>], yaw_hint: f64) -> Option<CuboidParams> {
    if points.len() < 4 {
        return None;
    }
    let xy: Vec<Point2<f64>> = points.iter().map(|p| Point2::new(p.x, p.y)).collect();
    let obb = crate::geometry::min_area_obb(&xy).ok()?;
    let (e0, e1) = obb.extent;
    if e0.min(e1) < MIN_CUBOID_DEPTH * 0.5 {
        return None;
    }
    let (k, yaw) = (0..4)
        .map(|k| (k, normalize_angle(obb.angle + k as f64 * std::f64::consts::FRAC_PI_2)))
        .min_by(|a, b| {
            crate::geometry::shapes::angle_diff(a.1, yaw_hint).abs().total_cmp(&crate::geometry::shapes::angle_diff(b.1, yaw_hint).abs())
        })?;
    let (width, depth) = if k % 2 == 0 { (e0, e1) } else { (e1, e0) };
    let (zlo, zhi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.z), h.max(p.z)));
    if zhi - zlo <= 0.0 {
        return None;
    }
    Some(CuboidParams {
        center: Vector3::new(obb.center.x, obb.center.y, (zlo + zhi) / 2.0),
        yaw,
        width,
        height: zhi - zlo,
        depth: depth.max(MIN_CUBOID_DEPTH),
    })
}
