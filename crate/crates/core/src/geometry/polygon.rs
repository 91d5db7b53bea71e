//! 2D computational geometry on pixel coordinates.
//!
//! Orientation convention: "counter-clockwise" means positive shoelace area
//! in `(u, v)` coordinates. Because image `v` points down this appears
//! clockwise on screen.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use super::GeometryError;

pub type Polygon = Vec<Point2<f64>>;

/// Axis-aligned pixel box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb2 {
    pub min: Point2<f64>,
    pub max: Point2<f64>,
}

impl Aabb2 {
    pub fn from_points(points: &[Point2<f64>]) -> Option<Aabb2> {
        let first = points.first()?;
        let mut b = Aabb2 { min: *first, max: *first };
        for p in &points[1..] {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        Some(b)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> Point2<f64> {
        Point2::new((self.min.x + self.max.x) / 2.0, (self.min.y + self.max.y) / 2.0)
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn intersects(&self, other: &Aabb2) -> bool {
        self.min.x <= other.max.x && other.min.x <= self.max.x && self.min.y <= other.max.y && other.min.y <= self.max.y
    }

    /// Corners as a counter-clockwise polygon.
    pub fn to_polygon(&self) -> Polygon {
        vec![
            Point2::new(self.min.x, self.max.y),
            self.min,
            Point2::new(self.max.x, self.min.y),
            self.max,
        ]
    }
}

fn cross(o: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

pub fn signed_area(poly: &[Point2<f64>]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let p = &poly[i];
        let q = &poly[(i + 1) % n];
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s
}

pub fn polygon_area(poly: &[Point2<f64>]) -> f64 {
    signed_area(poly).abs()
}

/// Area centroid; falls back to the vertex mean for zero-area input.
pub fn polygon_centroid(poly: &[Point2<f64>]) -> Point2<f64> {
    let n = poly.len();
    let a = signed_area(poly);
    if n < 3 || a.abs() < 1e-12 {
        let s = poly.iter().fold(Vector2::zeros(), |acc, p| acc + p.coords);
        return Point2::from(s / n.max(1) as f64);
    }
    // shift to the first vertex for numerical stability
    let o = poly[0].coords;
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let p = poly[i].coords - o;
        let q = poly[(i + 1) % n].coords - o;
        let c = p.x * q.y - q.x * p.y;
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    Point2::new(cx / (6.0 * a) + o.x, cy / (6.0 * a) + o.y)
}

/// Returns the polygon with positive signed area.
pub fn to_ccw(mut poly: Polygon) -> Polygon {
    if signed_area(&poly) < 0.0 {
        poly.reverse();
    }
    poly
}

/// Convex hull by monotone chain; counter-clockwise, collinear points removed.
pub fn convex_hull(points: &[Point2<f64>]) -> Polygon {
    let mut pts: Vec<Point2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point2<f64>> = Vec::with_capacity(pts.len());
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point2<f64>> = Vec::with_capacity(pts.len());
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Oriented rectangle in pixel space. `extent = (a, b)` with `a ≥ b` the
/// full side lengths; `angle ∈ [0, π)` is the direction of the long side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox2D {
    pub center: Point2<f64>,
    pub angle: f64,
    pub extent: (f64, f64),
}

impl OrientedBox2D {
    pub fn axes(&self) -> (Vector2<f64>, Vector2<f64>) {
        let (s, c) = self.angle.sin_cos();
        (Vector2::new(c, s), Vector2::new(-s, c))
    }

    pub fn area(&self) -> f64 {
        self.extent.0 * self.extent.1
    }

    /// Corners as `(sign_long, sign_short)` offsets: (−,−), (+,−), (+,+), (−,+).
    pub fn corners(&self) -> [Point2<f64>; 4] {
        let (e1, e2) = self.axes();
        let (ha, hb) = (self.extent.0 / 2.0, self.extent.1 / 2.0);
        [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
            .map(|(s1, s2)| self.center + e1 * (s1 * ha) + e2 * (s2 * hb))
    }

    pub fn contains(&self, p: &Point2<f64>, tol: f64) -> bool {
        let (e1, e2) = self.axes();
        let d = p - self.center;
        d.dot(&e1).abs() <= self.extent.0 / 2.0 + tol && d.dot(&e2).abs() <= self.extent.1 / 2.0 + tol
    }
}

/// Canonical long-axis angle in `[0, π)`; with (near-)equal sides the axis
/// in `[0, π/2)` is chosen.
fn canonical_obb(center: Point2<f64>, dir: Vector2<f64>, len_dir: f64, len_perp: f64) -> OrientedBox2D {
    let base = dir.y.atan2(dir.x);
    let square = (len_dir - len_perp).abs() <= 1e-12 * len_dir.max(len_perp);
    let (mut angle, a, b) = if len_dir >= len_perp {
        (base, len_dir, len_perp)
    } else {
        (base + FRAC_PI_2, len_perp, len_dir)
    };
    angle = angle.rem_euclid(PI);
    if square {
        angle = angle.rem_euclid(FRAC_PI_2);
    }
    if angle >= PI {
        angle -= PI;
    }
    OrientedBox2D { center, angle, extent: (a, b) }
}

/// Minimum-area enclosing rectangle (convex hull, then one caliper per hull
/// edge since an optimal rectangle is flush with some hull edge).
pub fn min_area_obb(points: &[Point2<f64>]) -> Result<OrientedBox2D, GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::DegenerateInput(format!("{} points, need at least 3", points.len())));
    }
    let hull = convex_hull(points);
    let scale = hull.iter().map(|p| p.coords.norm()).fold(1.0, f64::max);
    if hull.len() < 3 || polygon_area(&hull) <= 1e-12 * scale * scale {
        return Err(GeometryError::DegenerateInput("collinear point set".into()));
    }
    let n = hull.len();
    let mut best: Option<(f64, OrientedBox2D)> = None;
    for i in 0..n {
        let edge = hull[(i + 1) % n] - hull[i];
        let len = edge.norm();
        if len == 0.0 {
            continue;
        }
        let e = edge / len;
        let m = Vector2::new(-e.y, e.x);
        let (mut smin, mut smax, mut tmin, mut tmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &hull {
            let s = p.coords.dot(&e);
            let t = p.coords.dot(&m);
            smin = smin.min(s);
            smax = smax.max(s);
            tmin = tmin.min(t);
            tmax = tmax.max(t);
        }
        let area = (smax - smin) * (tmax - tmin);
        if best.as_ref().is_none_or(|(a, _)| area < *a * (1.0 - 1e-12)) {
            let center = Point2::from(e * ((smin + smax) / 2.0) + m * ((tmin + tmax) / 2.0));
            best = Some((area, canonical_obb(center, e, smax - smin, tmax - tmin)));
        }
    }
    best.map(|(_, b)| b).ok_or_else(|| GeometryError::DegenerateInput("empty hull".into()))
}

/// Clips `subject` against the half-plane left of the directed line `a → b`.
pub fn clip_half_plane(subject: &[Point2<f64>], a: &Point2<f64>, b: &Point2<f64>) -> Polygon {
    let n = subject.len();
    let mut out = Vec::with_capacity(n + 2);
    if n == 0 {
        return out;
    }
    let side = |p: &Point2<f64>| cross(a, b, p);
    for i in 0..n {
        let cur = &subject[i];
        let prev = &subject[(i + n - 1) % n];
        let (sc, sp) = (side(cur), side(prev));
        if sc >= 0.0 {
            if sp < 0.0 {
                out.push(prev + (cur - prev) * (sp / (sp - sc)));
            }
            out.push(*cur);
        } else if sp >= 0.0 {
            out.push(prev + (cur - prev) * (sp / (sp - sc)));
        }
    }
    out
}

/// Intersection of two convex counter-clockwise polygons.
pub fn convex_intersection(a: &[Point2<f64>], b: &[Point2<f64>]) -> Polygon {
    let mut out: Polygon = a.to_vec();
    let m = b.len();
    for i in 0..m {
        if out.is_empty() {
            break;
        }
        out = clip_half_plane(&out, &b[i], &b[(i + 1) % m]);
    }
    out
}

fn cmp_polygons(a: &[Point2<f64>], b: &[Point2<f64>]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.iter()
            .zip(b)
            .map(|(p, q)| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Intersection-over-union of two convex polygons (either orientation).
pub fn convex_polygon_iou(a: &[Point2<f64>], b: &[Point2<f64>]) -> Result<f64, GeometryError> {
    let a = to_ccw(a.to_vec());
    let b = to_ccw(b.to_vec());
    let (area_a, area_b) = (signed_area(&a), signed_area(&b));
    if area_a <= 0.0 || area_b <= 0.0 {
        return Err(GeometryError::DegenerateInput("zero-area polygon".into()));
    }
    // clip in a canonical order so that iou(a, b) == iou(b, a) bit for bit
    let (first, second) = if cmp_polygons(&a, &b).is_le() { (&a, &b) } else { (&b, &a) };
    let inter = polygon_area(&convex_intersection(first, second));
    let union = area_a + area_b - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

fn on_segment(p: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>, tol: f64) -> bool {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + ab * t - p).norm() <= tol
}

/// Inside-or-on-boundary test for a simple polygon.
pub fn point_in_polygon(p: &Point2<f64>, poly: &[Point2<f64>]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let tol = 1e-9 * (1.0 + p.coords.norm());
    let mut inside = false;
    for i in 0..n {
        let a = &poly[i];
        let b = &poly[(i + 1) % n];
        if on_segment(p, a, b, tol) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn segments_intersect(p1: &Point2<f64>, p2: &Point2<f64>, q1: &Point2<f64>, q2: &Point2<f64>) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(p1, q1, q2, 0.0))
        || (d2 == 0.0 && on_segment(p2, q1, q2, 0.0))
        || (d3 == 0.0 && on_segment(q1, p1, p2, 0.0))
        || (d4 == 0.0 && on_segment(q2, p1, p2, 0.0))
}

/// True when no two non-adjacent edges touch.
pub fn is_simple(poly: &[Point2<f64>]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(&poly[i], &poly[(i + 1) % n], &poly[j], &poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}
