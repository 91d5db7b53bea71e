//! Reprojection residuals for the three shape families.

use nalgebra::DMatrix;

use super::jet::Jet;
use crate::geometry::camera::project_generic;
use crate::geometry::scalar::{add3, dot3, scale3, sub3, Real, Vec3};
use crate::geometry::shapes::{cuboid_corners_generic, rect_corners_generic};
use crate::geometry::{RectSignParams, ShapeKind, ShapeParams};
use crate::proposal::VertexObservation;
use crate::scene::CameraFrame;

/// One image observation of the object being refined.
#[derive(Debug, Clone, Copy)]
pub struct FitObservation<'a> {
    pub frame: &'a CameraFrame,
    pub vertices: &'a VertexObservation,
}

impl<'a> FitObservation<'a> {
    pub fn new(frame: &'a CameraFrame, vertices: &'a VertexObservation) -> Self {
        FitObservation { frame, vertices }
    }
}

/// Scalar residuals per block: rect corners and circle contour points are
/// 2D pixel offsets, cuboid silhouette extents are scalars.
pub fn block_dim(kind: ShapeKind) -> usize {
    match kind {
        ShapeKind::Rect | ShapeKind::Circle => 2,
        ShapeKind::Cuboid => 1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub values: Vec<f64>,
    pub block_dim: usize,
    /// Indices into the input slice of the observations that contributed.
    pub used: Vec<usize>,
    /// Observations skipped because the model projected behind the camera.
    pub dropped: usize,
}

impl Residuals {
    pub fn block_norms(&self) -> Vec<f64> {
        self.values.chunks(self.block_dim).map(|b| b.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
    }
}

fn to_arr<T: Real>(p: &nalgebra::Vector3<f64>) -> Vec3<T> {
    [T::cst(p.x), T::cst(p.y), T::cst(p.z)]
}

fn pick<T: Real>(a: T, b: T, take_b: bool) -> T {
    if take_b {
        b
    } else {
        a
    }
}

/// Residuals of a single observation for parameter vector `x`, or `None`
/// if any model point needed falls behind the camera.
pub(crate) fn observation_residuals<T: Real>(kind: ShapeKind, x: &[T], o: &FitObservation) -> Option<Vec<T>> {
    let cam = &o.frame.intrinsics;
    let pose = &o.frame.world_from_camera;
    let c = [x[0], x[1], x[2]];
    let yaw = x[3];
    match kind {
        ShapeKind::Rect => {
            let corners = rect_corners_generic(c, yaw, x[4], x[5]);
            let mut out = Vec::with_capacity(8);
            for (k, corner) in corners.iter().enumerate() {
                let px = project_generic(cam, pose, *corner)?;
                let obs = o.vertices.corners[k];
                out.push(px[0] - obs.x);
                out.push(px[1] - obs.y);
            }
            Some(out)
        }
        ShapeKind::Cuboid => {
            let corners = cuboid_corners_generic(c, yaw, x[4], x[5], x[6]);
            let mut lo: Option<[T; 2]> = None;
            let mut hi: Option<[T; 2]> = None;
            for corner in corners.iter() {
                let px = project_generic(cam, pose, *corner)?;
                lo = Some(match lo {
                    None => px,
                    Some(l) => [pick(l[0], px[0], px[0].value() < l[0].value()), pick(l[1], px[1], px[1].value() < l[1].value())],
                });
                hi = Some(match hi {
                    None => px,
                    Some(h) => [pick(h[0], px[0], px[0].value() > h[0].value()), pick(h[1], px[1], px[1].value() > h[1].value())],
                });
            }
            let (lo, hi) = (lo?, hi?);
            let b = &o.vertices.mask_box;
            Some(vec![lo[0] - b.min.x, lo[1] - b.min.y, hi[0] - b.max.x, hi[1] - b.max.y])
        }
        ShapeKind::Circle => {
            let r = x[4];
            let n = [yaw.sin(), -yaw.cos(), T::cst(0.0)];
            let origin: Vec3<T> = to_arr(&o.frame.camera_center());
            let oc = sub3(c, origin);
            let mut out = Vec::with_capacity(2 * o.vertices.contour.len());
            for pixel in &o.vertices.contour {
                let d: Vec3<T> = to_arr(&o.frame.ray(pixel));
                let dn = dot3(d, n);
                if dn.value().abs() < 1e-9 {
                    return None;
                }
                let t = dot3(oc, n) / dn;
                if t.value() <= 0.0 {
                    return None;
                }
                let hit = add3(origin, scale3(d, t));
                let q = sub3(hit, c);
                let qn = dot3(q, q).sqrt();
                if qn.value() < 1e-12 {
                    return None;
                }
                let p = add3(c, scale3(q, r / qn));
                let px = project_generic(cam, pose, p)?;
                out.push(px[0] - pixel.x);
                out.push(px[1] - pixel.y);
            }
            Some(out)
        }
    }
}

/// Scale turning support-point surface distances (meters) into residual
/// units comparable to pixels.
pub const SUPPORT_WEIGHT: f64 = 100.0;

fn abs<T: Real>(v: T) -> T {
    if v.value() < 0.0 {
        -v
    } else {
        v
    }
}

/// Signed distance (scaled by [`SUPPORT_WEIGHT`]) from `p` to the surface of
/// the cuboid `x`: positive outside, negative inside.
pub(crate) fn support_residual<T: Real>(x: &[T], p: &nalgebra::Vector3<f64>) -> T {
    let d = sub3(to_arr(p), [x[0], x[1], x[2]]);
    let (s, c) = (x[3].sin(), x[3].cos());
    let la = d[0] * c + d[1] * s;
    let ln = d[0] * s - d[1] * c;
    let q = [abs(la) - x[4] * 0.5, abs(d[2]) - x[5] * 0.5, abs(ln) - x[6] * 0.5];
    let mut max = q[0];
    for v in &q[1..] {
        if v.value() > max.value() {
            max = *v;
        }
    }
    let dist = if max.value() > 0.0 {
        let mut sq = T::cst(0.0);
        for v in q {
            if v.value() > 0.0 {
                sq = sq + v * v;
            }
        }
        sq.sqrt()
    } else {
        max
    };
    dist * SUPPORT_WEIGHT
}

/// Image residuals of all `observations` (occlusion flags ignored) for a
/// parameter vector in any scalar type. `None` if a model point needed falls
/// behind a camera.
pub fn residuals_generic<T: Real>(kind: ShapeKind, x: &[T], observations: &[FitObservation]) -> Option<Vec<T>> {
    let mut out = Vec::new();
    for o in observations {
        out.extend(observation_residuals(kind, x, o)?);
    }
    Some(out)
}

/// Support-point residuals; only box-shaped objects use them.
pub fn support_residuals(params: &ShapeParams, support: &[nalgebra::Vector3<f64>]) -> Vec<f64> {
    match params.kind() {
        ShapeKind::Cuboid => {
            let x = params.to_vector();
            support.iter().map(|p| support_residual(&x, p)).collect()
        }
        _ => Vec::new(),
    }
}

/// Residuals for `params` over all unoccluded observations; observations
/// that project behind the camera are dropped and counted.
pub fn residuals(params: &ShapeParams, observations: &[FitObservation]) -> Residuals {
    let kind = params.kind();
    let x = params.to_vector();
    let mut out = Residuals { values: Vec::new(), block_dim: block_dim(kind), used: Vec::new(), dropped: 0 };
    for (i, o) in observations.iter().enumerate() {
        if o.vertices.occluded {
            continue;
        }
        match observation_residuals(kind, &x, o) {
            Some(r) => {
                out.values.extend(r);
                out.used.push(i);
            }
            None => out.dropped += 1,
        }
    }
    out
}

/// Eight residuals (4 corners × (u, v)) per usable observation, ordered by
/// frame id and then corner index.
pub fn rect_residuals(params: &RectSignParams, observations: &[FitObservation]) -> Residuals {
    let mut order: Vec<usize> = (0..observations.len()).collect();
    order.sort_by_key(|&i| (observations[i].frame.frame_id, observations[i].vertices.obs_id));
    let sorted: Vec<FitObservation> = order.iter().map(|&i| observations[i]).collect();
    let mut r = residuals(&ShapeParams::Rect(*params), &sorted);
    r.used = r.used.iter().map(|&k| order[k]).collect();
    r
}

/// Residuals and their exact Jacobian for parameter vector `x` over a fixed
/// set of observations. `None` if any observation projects behind a camera.
pub(crate) fn evaluate_with_jacobian(
    kind: ShapeKind,
    x: &[f64],
    observations: &[FitObservation],
    support: &[nalgebra::Vector3<f64>],
) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let dof = kind.dof();
    let xj: Vec<Jet> = x.iter().enumerate().map(|(i, &v)| Jet::variable(v, i)).collect();
    let mut values = Vec::new();
    let mut rows: Vec<[f64; super::jet::MAX_DOF]> = Vec::new();
    for o in observations {
        for r in observation_residuals(kind, &xj, o)? {
            values.push(r.re);
            rows.push(r.eps);
        }
    }
    if kind == ShapeKind::Cuboid {
        for p in support {
            let r = support_residual(&xj, p);
            values.push(r.re);
            rows.push(r.eps);
        }
    }
    let j = DMatrix::from_fn(values.len(), dof, |i, k| rows[i][k]);
    Some((values, j))
}

pub(crate) fn evaluate(
    kind: ShapeKind,
    x: &[f64],
    observations: &[FitObservation],
    support: &[nalgebra::Vector3<f64>],
) -> Option<Vec<f64>> {
    let mut values = Vec::new();
    for o in observations {
        values.extend(observation_residuals(kind, x, o)?);
    }
    if kind == ShapeKind::Cuboid {
        values.extend(support.iter().map(|p| support_residual(x, p)));
    }
    Some(values)
}

/// Jacobian of [`support_residuals`].
pub fn support_jacobian(params: &ShapeParams, support: &[nalgebra::Vector3<f64>]) -> DMatrix<f64> {
    evaluate_with_jacobian(params.kind(), &params.to_vector(), &[], support)
        .map(|(_, j)| j)
        .expect("support residuals are always defined")
}

/// Jacobian of [`residuals`] with respect to the parameter vector
/// (rows follow the same observation order and dropping rule).
pub fn jacobian(params: &ShapeParams, observations: &[FitObservation]) -> DMatrix<f64> {
    let used: Vec<FitObservation> = residuals(params, observations).used.iter().map(|&i| observations[i]).collect();
    evaluate_with_jacobian(params.kind(), &params.to_vector(), &used, &[])
        .map(|(_, j)| j)
        .unwrap_or_else(|| DMatrix::zeros(0, params.kind().dof()))
}

#[cfg(test)]
mod tests {
    use nalgebra::{Point2, Vector3};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::{Aabb2, CameraIntrinsics, CuboidParams};
    use crate::scene::ObjectClass;
    use crate::synth::camera_pose;
    use crate::testutil::{fit_views, Dd, first_of, noiseless, object_support, object_vertices};

    fn frontal_frame() -> CameraFrame {
        CameraFrame {
            frame_id: 0,
            timestamp: 0,
            intrinsics: CameraIntrinsics { fx: 1000.0, fy: 1000.0, cx: 960.0, cy: 540.0, width: 1920, height: 1080 },
            world_from_camera: camera_pose(Vector3::new(0.0, 0.0, 1.5), 0.0),
            camera_name: "front".into(),
            paired_timestamp_offset_us: None,
        }
    }

    fn exact_vertices(frame: &CameraFrame, rect: &RectSignParams) -> VertexObservation {
        let corners: Vec<Point2<f64>> = rect.corners().iter().map(|c| frame.project(c).unwrap()).collect();
        VertexObservation {
            obs_id: 1,
            frame_id: frame.frame_id,
            class: ObjectClass::Guideboard,
            mask_box: Aabb2::from_points(&corners).unwrap(),
            contour: corners.clone(),
            corners,
            occluded: false,
        }
    }

    #[test]
    fn zero_at_ground_truth() {
        let (scene, gt) = noiseless();
        for o in &gt.objects {
            let verts = object_vertices(scene, gt, o.object_id);
            let views = fit_views(scene, &verts);
            let r = residuals(&o.params, &views);
            assert_eq!(r.used.len(), views.len());
            assert!(r.values.iter().all(|v| v.abs() < 1e-6), "object {}", o.object_id);
            let s = support_residuals(&o.params, &object_support(scene, gt, o.object_id));
            assert!(s.iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn rect_count_is_eight_per_unoccluded_view() {
        let (scene, gt) = noiseless();
        let sign = first_of(gt, ObjectClass::Guideboard);
        let mut verts = object_vertices(scene, gt, sign.object_id);
        verts[0].occluded = true;
        verts[2].occluded = true;
        let views = fit_views(scene, &verts);
        let ShapeParams::Rect(p) = sign.params else { unreachable!() };
        let r = rect_residuals(&p, &views);
        assert_eq!(r.values.len(), 8 * (views.len() - 2));
        assert!(!r.used.contains(&0) && !r.used.contains(&2));
        let frames: Vec<u64> = r.used.iter().map(|&i| views[i].frame.frame_id).collect();
        assert!(frames.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn lateral_shift_at_ten_meters() {
        let frame = frontal_frame();
        let rect = RectSignParams { center: Vector3::new(10.0, 0.0, 1.5), yaw: -std::f64::consts::FRAC_PI_2, width: 1.0, height: 0.5 };
        let v = exact_vertices(&frame, &rect);
        let shifted = RectSignParams { center: rect.center + Vector3::new(0.0, -0.1, 0.0), ..rect };
        let r = rect_residuals(&shifted, &[FitObservation::new(&frame, &v)]);
        for c in r.values.chunks(2) {
            assert!((c[0] - 10.0).abs() < 1e-9, "{c:?}");
            assert!(c[1].abs() < 1e-9);
        }
    }

    #[test]
    fn raising_lowers_v() {
        let (scene, gt) = noiseless();
        let sign = first_of(gt, ObjectClass::Guideboard);
        let verts = object_vertices(scene, gt, sign.object_id);
        let views = fit_views(scene, &verts);
        let j = jacobian(&sign.params, &views);
        for row in (1..j.nrows()).step_by(2) {
            assert!(j[(row, 2)] < 0.0, "row {row}: {}", j[(row, 2)]);
        }
        let mut up = sign.params.to_vector();
        up[2] += 0.05;
        let raised = residuals(&ShapeParams::from_vector(ShapeKind::Rect, &up), &views);
        assert!(raised.values.iter().skip(1).step_by(2).all(|&dv| dv < 0.0));
    }

    #[test]
    fn rect_jacobian_has_full_rank() {
        let (scene, gt) = noiseless();
        for o in gt.objects.iter().filter(|o| o.class == ObjectClass::Guideboard) {
            let verts = object_vertices(scene, gt, o.object_id);
            let views = fit_views(scene, &verts);
            for pair in views.windows(2).step_by(3) {
                let j = jacobian(&o.params, pair);
                for c in 0..6 {
                    assert!(j.column(c).amax() > 1e-6);
                }
                assert_eq!(j.clone().svd(false, false).rank(1e-9 * j.amax()), 6);
            }
        }
    }

    // central differences evaluated in double-double so cancellation stays
    // far below the tolerance
    fn finite_difference(params: &ShapeParams, views: &[FitObservation]) -> DMatrix<f64> {
        let kind = params.kind();
        let used: Vec<FitObservation> = residuals(params, views).used.iter().map(|&i| views[i]).collect();
        let x: Vec<Dd> = params.to_vector().into_iter().map(Dd::cst).collect();
        let n = residuals(params, views).values.len();
        let h = 1e-6;
        let mut out = DMatrix::zeros(n, kind.dof());
        for k in 0..kind.dof() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[k] = xp[k] + h;
            xm[k] = xm[k] - h;
            let rp = residuals_generic(kind, &xp, &used).unwrap();
            let rm = residuals_generic(kind, &xm, &used).unwrap();
            for i in 0..n {
                out[(i, k)] = ((rp[i] - rm[i]) / (2.0 * h)).value();
            }
        }
        out
    }

    fn worst_relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .filter(|(x, y)| x.abs() > 1e-6 || y.abs() > 1e-6)
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (scene, gt) = noiseless();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for o in &gt.objects {
            let verts = object_vertices(scene, gt, o.object_id);
            let views = fit_views(scene, &verts);
            let mut x = o.params.to_vector();
            for v in x.iter_mut() {
                *v += rng.random_range(-0.05..0.05);
            }
            let p = ShapeParams::from_vector(o.params.kind(), &x);
            let j = jacobian(&p, &views);
            assert_eq!(j.nrows(), residuals(&p, &views).values.len());
            let fd = finite_difference(&p, &views);
            let err = worst_relative_error(&j, &fd);
            assert!(err < 1e-4, "object {} ({:?}): {err}", o.object_id, o.class);
        }
    }

    #[test]
    fn support_jacobian_matches_finite_differences() {
        let b = CuboidParams { center: Vector3::new(1.0, 2.0, 3.0), yaw: 0.3, width: 0.4, height: 1.0, depth: 0.3 };
        let p = ShapeParams::Cuboid(b);
        let pts = [Vector3::new(1.5, 2.1, 3.2), Vector3::new(1.05, 2.0, 3.1), Vector3::new(0.7, 1.6, 2.0)];
        let j = support_jacobian(&p, &pts);
        let x = p.to_vector();
        for k in 0..7 {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[k] += 1e-6;
            xm[k] -= 1e-6;
            let rp = support_residuals(&ShapeParams::from_vector(ShapeKind::Cuboid, &xp), &pts);
            let rm = support_residuals(&ShapeParams::from_vector(ShapeKind::Cuboid, &xm), &pts);
            for i in 0..pts.len() {
                let fd = (rp[i] - rm[i]) / 2e-6;
                assert!((fd - j[(i, k)]).abs() <= 1e-4 * fd.abs().max(1e-2), "{i} {k}: {fd} vs {}", j[(i, k)]);
            }
        }
    }

    #[test]
    fn yaw_gauge() {
        let (scene, gt) = noiseless();
        for o in &gt.objects {
            let verts = object_vertices(scene, gt, o.object_id);
            let views = fit_views(scene, &verts);
            let mut x = o.params.to_vector();
            x[0] += 0.1;
            let a = residuals(&ShapeParams::from_vector(o.params.kind(), &x), &views).values;
            x[3] += std::f64::consts::TAU;
            let b = residuals(&ShapeParams::from_vector(o.params.kind(), &x), &views).values;
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn behind_camera_is_dropped() {
        let frame = frontal_frame();
        let rect = RectSignParams { center: Vector3::new(10.0, 0.0, 1.5), yaw: -std::f64::consts::FRAC_PI_2, width: 1.0, height: 0.5 };
        let v = exact_vertices(&frame, &rect);
        let behind = RectSignParams { center: Vector3::new(-10.0, 0.0, 1.5), ..rect };
        let r = rect_residuals(&behind, &[FitObservation::new(&frame, &v)]);
        assert_eq!((r.values.len(), r.dropped), (0, 1));
    }
}
