use std::f64::consts::TAU;

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use super::{ProposalError, ProposalParams};
use crate::evaluate::hungarian;
use crate::geometry::{min_area_obb, Aabb2};
use crate::scene::{InstanceObservation, ObjectClass};

/// Number of angular bins a circular contour is resampled into.
pub const CIRCLE_CONTOUR_BINS: usize = 24;

/// Image-space vertices extracted from one instance mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexObservation {
    pub obs_id: u64,
    pub frame_id: u64,
    pub class: ObjectClass,
    /// BL, TL, TR, BR for the rectangular family; angular contour samples
    /// (bin `k` at image angle `2πk/K`, counter-clockwise on screen starting
    /// at image-right) for circular signs.
    pub corners: Vec<Point2<f64>>,
    /// Raw mask outline.
    pub contour: Vec<Point2<f64>>,
    pub mask_box: Aabb2,
    pub occluded: bool,
}

impl VertexObservation {
    /// Swaps left and right labels (BL↔BR, TL↔TR) for a view from behind.
    pub fn mirrored(&self) -> VertexObservation {
        let mut out = self.clone();
        if out.corners.len() == 4 {
            out.corners.swap(0, 3);
            out.corners.swap(1, 2);
        }
        out
    }
}

/// Builds the vertex observation for `obs`, including the occlusion flag.
pub fn vertex_observation(obs: &InstanceObservation, params: &ProposalParams) -> Result<VertexObservation, ProposalError> {
    let mut v = extract_mask_vertices(obs)?;
    v.occluded = !occlusion_gate(obs, params);
    Ok(v)
}

/// Mask corners ordered BL, TL, TR, BR (rectangular classes) or angular
/// contour samples (circular class). `occluded` is left false.
pub fn extract_mask_vertices(obs: &InstanceObservation) -> Result<VertexObservation, ProposalError> {
    let corners = match obs.class {
        ObjectClass::CircularSign => angular_contour_samples(&obs.mask, &obs.det_box.center(), CIRCLE_CONTOUR_BINS)?,
        _ => ordered_corners(&obs.mask)?,
    };
    Ok(VertexObservation {
        obs_id: obs.obs_id,
        frame_id: obs.frame_id,
        class: obs.class,
        corners,
        contour: obs.mask.clone(),
        mask_box: Aabb2::from_points(&obs.mask).expect("validated mask is non-empty"),
        occluded: false,
    })
}

/// Fits the minimum-area OBB, labels its corners by image orientation and
/// snaps each to a distinct mask vertex (minimum total distance).
pub fn ordered_corners(mask: &[Point2<f64>]) -> Result<Vec<Point2<f64>>, ProposalError> {
    if mask.len() < 4 {
        return Err(ProposalError::DegenerateMask(format!("{} mask vertices", mask.len())));
    }
    let obb = min_area_obb(mask).map_err(|e| ProposalError::DegenerateMask(e.to_string()))?;
    let (e1, e2) = obb.axes();
    let (l1, l2) = obb.extent;
    // horizontal axis: the OBB axis closest to image-horizontal, pointing right
    let (mut h, lh, mut vert, lv) = if e1.x.abs() >= e2.x.abs() { (e1, l1, e2, l2) } else { (e2, l2, e1, l1) };
    if h.x < 0.0 || (h.x == 0.0 && h.y > 0.0) {
        h = -h;
    }
    // vertical axis points up on screen (decreasing v)
    if vert.y > 0.0 || (vert.y == 0.0 && vert.x < 0.0) {
        vert = -vert;
    }
    let c = obb.center;
    let box_corners: Vec<Point2<f64>> = [(-1.0, -1.0), (-1.0, 1.0), (1.0, 1.0), (1.0, -1.0)]
        .iter()
        .map(|&(sh, sv)| c + h * (sh * lh / 2.0) + vert * (sv * lv / 2.0))
        .collect();
    let cost: Vec<Vec<f64>> =
        box_corners.iter().map(|b| mask.iter().map(|m| (m - b).norm()).collect()).collect();
    let pairs = hungarian(&cost);
    Ok(pairs.into_iter().map(|(_, j)| mask[j]).collect())
}

/// Resamples a closed contour at `bins` equally spaced image angles around
/// `center`; angle 0 is image-right and angles grow towards image-up.
pub fn angular_contour_samples(
    mask: &[Point2<f64>],
    center: &Point2<f64>,
    bins: usize,
) -> Result<Vec<Point2<f64>>, ProposalError> {
    let n = mask.len();
    (0..bins)
        .map(|k| {
            let alpha = TAU * k as f64 / bins as f64;
            let dir = Vector2::new(alpha.cos(), -alpha.sin());
            let mut best: Option<f64> = None;
            for i in 0..n {
                let a = mask[i] - center;
                let b = mask[(i + 1) % n] - center;
                let e = b - a;
                let denom = dir.x * e.y - dir.y * e.x;
                if denom.abs() < 1e-15 {
                    continue;
                }
                // center + t·dir = a + s·e
                let t = (a.x * e.y - a.y * e.x) / denom;
                let s = (a.x * dir.y - a.y * dir.x) / denom;
                if t > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s) {
                    best = Some(best.map_or(t, |bt: f64| bt.max(t)));
                }
            }
            best.map(|t| center + dir * t)
                .ok_or_else(|| ProposalError::DegenerateMask("contour does not surround its center".into()))
        })
        .collect()
}

/// Area-ratio occlusion test: keeps the observation iff
/// `area(AABB(mask)) / area(det_box) >= a_th`.
pub fn occlusion_gate(obs: &InstanceObservation, params: &ProposalParams) -> bool {
    occlusion_ratio(obs) >= params.a_th
}

pub fn occlusion_ratio(obs: &InstanceObservation) -> f64 {
    let mask_box = Aabb2::from_points(&obs.mask).map(|b| b.area()).unwrap_or(0.0);
    mask_box / obs.det_box.area()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs_with(mask: Vec<Point2<f64>>, det: Aabb2, class: ObjectClass) -> InstanceObservation {
        InstanceObservation { obs_id: 1, frame_id: 0, class, det_box: det, mask }
    }

    fn p(x: f64, y: f64) -> Point2<f64> {
        Point2::new(x, y)
    }

    #[test]
    fn trapezoid_corners_are_exact_vertices() {
        // perspective view of an upright sign: BL, TL, TR, BR
        let quad = vec![p(100.0, 300.0), p(100.0, 100.0), p(400.0, 140.0), p(400.0, 260.0)];
        let c = ordered_corners(&quad).unwrap();
        assert_eq!(c, quad);
        let mut shifted = quad.clone();
        shifted.rotate_left(2);
        assert_eq!(ordered_corners(&shifted).unwrap(), quad);
    }

    #[test]
    fn square_orderings_canonicalize() {
        let sq = vec![p(0.0, 10.0), p(0.0, 0.0), p(10.0, 0.0), p(10.0, 10.0)];
        let expected = ordered_corners(&sq).unwrap();
        assert_eq!(expected, sq);
        for k in 1..4 {
            let mut s = sq.clone();
            s.rotate_left(k);
            assert_eq!(ordered_corners(&s).unwrap(), expected);
        }
    }

    #[test]
    fn sliver_is_degenerate() {
        let sliver = vec![p(0.0, 0.0), p(5.0, 5.0), p(10.0, 10.0)];
        let o = obs_with(sliver, Aabb2 { min: p(0.0, 0.0), max: p(10.0, 10.0) }, ObjectClass::Guideboard);
        assert!(matches!(extract_mask_vertices(&o), Err(ProposalError::DegenerateMask(_))));
        let collinear = vec![p(0.0, 0.0), p(5.0, 5.0), p(10.0, 10.0), p(2.0, 2.0)];
        assert!(ordered_corners(&collinear).is_err());
    }

    #[test]
    fn gate_keeps_full_and_rejects_half() {
        let mask = vec![p(10.0, 20.0), p(10.0, 10.0), p(30.0, 10.0), p(30.0, 20.0)];
        let det = Aabb2::from_points(&mask).unwrap();
        let params = ProposalParams::default();
        let full = obs_with(mask.clone(), det, ObjectClass::Guideboard);
        assert_eq!(occlusion_ratio(&full), 1.0);
        assert!(occlusion_gate(&full, &params));
        let half = vec![p(10.0, 20.0), p(10.0, 10.0), p(20.0, 10.0), p(20.0, 20.0)];
        let o = obs_with(half, det, ObjectClass::Guideboard);
        assert!((occlusion_ratio(&o) - 0.5).abs() < 1e-12);
        assert!(!occlusion_gate(&o, &params));
    }

    #[test]
    fn gate_boundary_keeps() {
        let det = Aabb2 { min: p(0.0, 0.0), max: p(100.0, 100.0) };
        let mask = vec![p(0.0, 95.0), p(0.0, 0.0), p(100.0, 0.0), p(100.0, 95.0)];
        let o = obs_with(mask, det, ObjectClass::Guideboard);
        let params = ProposalParams { a_th: occlusion_ratio(&o), ..Default::default() };
        assert!(occlusion_gate(&o, &params));
    }

    #[test]
    fn gate_translation_and_scale_invariant() {
        let mask = vec![p(10.0, 20.0), p(10.0, 10.0), p(27.0, 10.0), p(27.0, 20.0)];
        let det = Aabb2 { min: p(10.0, 10.0), max: p(30.0, 20.0) };
        let params = ProposalParams::default();
        let base = occlusion_gate(&obs_with(mask.clone(), det, ObjectClass::Guideboard), &params);
        for (du, dv, s) in [(13.0, -4.0, 1.0), (0.0, 0.0, 3.5), (-7.0, 2.0, 0.25)] {
            let t = |q: &Point2<f64>| p(q.x * s + du, q.y * s + dv);
            let m2: Vec<_> = mask.iter().map(t).collect();
            let d2 = Aabb2 { min: t(&det.min), max: t(&det.max) };
            assert_eq!(occlusion_gate(&obs_with(m2, d2, ObjectClass::Guideboard), &params), base);
        }
    }

    #[test]
    fn circle_samples_on_contour() {
        let n = 64;
        let mask: Vec<_> = (0..n)
            .map(|k| {
                let a = TAU * k as f64 / n as f64;
                p(200.0 + 50.0 * a.cos(), 100.0 + 50.0 * a.sin())
            })
            .collect();
        let s = angular_contour_samples(&mask, &p(200.0, 100.0), 24).unwrap();
        assert_eq!(s.len(), 24);
        for q in &s {
            let r = (q - p(200.0, 100.0)).norm();
            assert!(r <= 50.0 + 1e-9 && r > 49.0);
        }
        // bin 6 is straight up on screen
        assert!(s[6].y < 100.0 && (s[6].x - 200.0).abs() < 1e-9);
    }
}
