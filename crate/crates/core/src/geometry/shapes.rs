//! Parametric shape models for static road objects.
//!
//! All shapes are upright: the height axis is world up (+z) and `yaw` rotates
//! the in-plane horizontal axis `a = (cos yaw, sin yaw, 0)`. The front normal
//! is `n = a × up = (sin yaw, -cos yaw, 0)`; a viewer on the `+n` side sees
//! `-a` on its left.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::scalar::{add3, scale3, Real, Vec3};

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let a = theta.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Smallest signed difference `a - b` wrapped into `(-π, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

pub fn horizontal_axis(yaw: f64) -> Vector3<f64> {
    Vector3::new(yaw.cos(), yaw.sin(), 0.0)
}

pub fn front_normal(yaw: f64) -> Vector3<f64> {
    Vector3::new(yaw.sin(), -yaw.cos(), 0.0)
}

/// Yaw whose front normal points along the horizontal part of `n`.
pub fn yaw_from_normal(n: &Vector3<f64>) -> f64 {
    n.x.atan2(-n.y)
}

pub fn rect_corners_generic<T: Real>(c: Vec3<T>, yaw: T, w: T, h: T) -> [Vec3<T>; 4] {
    let (s, co) = (yaw.sin(), yaw.cos());
    let hw = w * 0.5;
    let hh = h * 0.5;
    let ax = [co * hw, s * hw, T::cst(0.0)];
    let up = [T::cst(0.0), T::cst(0.0), hh];
    let neg = |v: Vec3<T>| [-v[0], -v[1], -v[2]];
    [
        add3(add3(c, neg(ax)), neg(up)),
        add3(add3(c, neg(ax)), up),
        add3(add3(c, ax), up),
        add3(add3(c, ax), neg(up)),
    ]
}

/// Front face (`+n` side) BL, TL, TR, BR followed by the back face in the
/// same labelling.
pub fn cuboid_corners_generic<T: Real>(c: Vec3<T>, yaw: T, w: T, h: T, d: T) -> [Vec3<T>; 8] {
    let hd = d * 0.5;
    let n = [yaw.sin() * hd, -(yaw.cos() * hd), T::cst(0.0)];
    let front = rect_corners_generic(add3(c, n), yaw, w, h);
    let back = rect_corners_generic(add3(c, [-n[0], -n[1], -n[2]]), yaw, w, h);
    [front[0], front[1], front[2], front[3], back[0], back[1], back[2], back[3]]
}

/// Point at in-plane angle `phi` (from `+a` towards `+up`) on an upright circle.
pub fn circle_point_generic<T: Real>(c: Vec3<T>, yaw: T, r: T, phi: f64) -> Vec3<T> {
    let (cp, sp) = (phi.cos(), phi.sin());
    let a = [yaw.cos(), yaw.sin(), T::cst(0.0)];
    add3(add3(c, scale3(a, r * cp)), [T::cst(0.0), T::cst(0.0), r * sp])
}

fn v3(p: Vec3<f64>) -> Vector3<f64> {
    Vector3::new(p[0], p[1], p[2])
}

fn arr(p: &Vector3<f64>) -> Vec3<f64> {
    [p.x, p.y, p.z]
}

/// Upright rectangular signboard: `(x, y, z, yaw, w, h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectSignParams {
    pub center: Vector3<f64>,
    pub yaw: f64,
    pub width: f64,
    pub height: f64,
}

impl RectSignParams {
    /// Corners ordered BL, TL, TR, BR as seen from the front.
    pub fn corners(&self) -> [Vector3<f64>; 4] {
        rect_corners_generic(arr(&self.center), self.yaw, self.width, self.height).map(v3)
    }
}

/// Box-shaped object (traffic light, cone): `(x, y, z, yaw, w, h, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuboidParams {
    pub center: Vector3<f64>,
    pub yaw: f64,
    pub width: f64,
    pub height: f64,
    pub depth: f64,
}

impl CuboidParams {
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        cuboid_corners_generic(arr(&self.center), self.yaw, self.width, self.height, self.depth).map(v3)
    }
}

/// Upright circular sign: `(x, y, z, yaw, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleSignParams {
    pub center: Vector3<f64>,
    pub yaw: f64,
    pub radius: f64,
}

impl CircleSignParams {
    /// `n` points uniformly spaced in angle, starting at `center + r·a`.
    pub fn contour(&self, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|k| {
                let phi = TAU * k as f64 / n as f64;
                v3(circle_point_generic(arr(&self.center), self.yaw, self.radius, phi))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Rect,
    Cuboid,
    Circle,
}

impl ShapeKind {
    pub fn dof(self) -> usize {
        match self {
            ShapeKind::Rect => 6,
            ShapeKind::Cuboid => 7,
            ShapeKind::Circle => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ShapeParams {
    Rect(RectSignParams),
    Cuboid(CuboidParams),
    Circle(CircleSignParams),
}

/// Contour sample count used when a circle has to be drawn as a polygon.
pub const CIRCLE_OUTLINE_SAMPLES: usize = 32;

impl ShapeParams {
    pub fn kind(&self) -> ShapeKind {
        match self {
            ShapeParams::Rect(_) => ShapeKind::Rect,
            ShapeParams::Cuboid(_) => ShapeKind::Cuboid,
            ShapeParams::Circle(_) => ShapeKind::Circle,
        }
    }

    pub fn center(&self) -> Vector3<f64> {
        match self {
            ShapeParams::Rect(p) => p.center,
            ShapeParams::Cuboid(p) => p.center,
            ShapeParams::Circle(p) => p.center,
        }
    }

    pub fn yaw(&self) -> f64 {
        match self {
            ShapeParams::Rect(p) => p.yaw,
            ShapeParams::Cuboid(p) => p.yaw,
            ShapeParams::Circle(p) => p.yaw,
        }
    }

    pub fn normal(&self) -> Vector3<f64> {
        front_normal(self.yaw())
    }

    /// Parameter vector in optimizer order: center, yaw, then sizes.
    pub fn to_vector(&self) -> Vec<f64> {
        match self {
            ShapeParams::Rect(p) => vec![p.center.x, p.center.y, p.center.z, p.yaw, p.width, p.height],
            ShapeParams::Cuboid(p) => {
                vec![p.center.x, p.center.y, p.center.z, p.yaw, p.width, p.height, p.depth]
            }
            ShapeParams::Circle(p) => vec![p.center.x, p.center.y, p.center.z, p.yaw, p.radius],
        }
    }

    pub fn from_vector(kind: ShapeKind, x: &[f64]) -> ShapeParams {
        assert_eq!(x.len(), kind.dof());
        let center = Vector3::new(x[0], x[1], x[2]);
        match kind {
            ShapeKind::Rect => ShapeParams::Rect(RectSignParams { center, yaw: x[3], width: x[4], height: x[5] }),
            ShapeKind::Cuboid => ShapeParams::Cuboid(CuboidParams {
                center,
                yaw: x[3],
                width: x[4],
                height: x[5],
                depth: x[6],
            }),
            ShapeKind::Circle => ShapeParams::Circle(CircleSignParams { center, yaw: x[3], radius: x[4] }),
        }
    }

    /// Sizes (w, h[, d] or r) in parameter order.
    pub fn sizes(&self) -> Vec<f64> {
        self.to_vector()[4..].to_vec()
    }

    /// Vertices of the object's 3D bounding geometry: rectangle corners,
    /// cuboid corners, or the four axis points of a circle.
    pub fn box_vertices(&self) -> Vec<Vector3<f64>> {
        match self {
            ShapeParams::Rect(p) => p.corners().to_vec(),
            ShapeParams::Cuboid(p) => p.corners().to_vec(),
            ShapeParams::Circle(p) => p.contour(4),
        }
    }

    /// Points whose projected convex hull is the object's image outline.
    pub fn outline_points(&self) -> Vec<Vector3<f64>> {
        match self {
            ShapeParams::Circle(p) => p.contour(CIRCLE_OUTLINE_SAMPLES),
            _ => self.box_vertices(),
        }
    }

    /// Tests whether `p` lies inside the shape volume grown by `margin`
    /// meters on every side (planar shapes get a slab of half-thickness
    /// `margin`).
    pub fn contains(&self, p: &Vector3<f64>, margin: f64) -> bool {
        let d = p - self.center();
        let a = horizontal_axis(self.yaw());
        let n = self.normal();
        let (la, ln, lz) = (d.dot(&a), d.dot(&n), d.z);
        match self {
            ShapeParams::Rect(r) => {
                la.abs() <= r.width / 2.0 + margin && lz.abs() <= r.height / 2.0 + margin && ln.abs() <= margin
            }
            ShapeParams::Cuboid(c) => {
                la.abs() <= c.width / 2.0 + margin
                    && lz.abs() <= c.height / 2.0 + margin
                    && ln.abs() <= c.depth / 2.0 + margin
            }
            ShapeParams::Circle(c) => (la * la + lz * lz).sqrt() <= c.radius + margin && ln.abs() <= margin,
        }
    }

    /// Same shape with yaw wrapped into `(-π, π]`.
    pub fn normalized(&self) -> ShapeParams {
        let mut x = self.to_vector();
        x[3] = normalize_angle(x[3]);
        ShapeParams::from_vector(self.kind(), &x)
    }

    /// Parameterizations describing the same physical point set.
    pub fn equivalent_forms(&self) -> Vec<ShapeParams> {
        let x = self.to_vector();
        let with = |yaw_offset: f64, swap_wd: bool| {
            let mut y = x.clone();
            y[3] = normalize_angle(y[3] + yaw_offset);
            if swap_wd {
                y.swap(4, 6);
            }
            ShapeParams::from_vector(self.kind(), &y)
        };
        match self.kind() {
            ShapeKind::Rect | ShapeKind::Circle => vec![with(0.0, false), with(PI, false)],
            ShapeKind::Cuboid => vec![
                with(0.0, false),
                with(FRAC_PI_2, true),
                with(PI, false),
                with(-FRAC_PI_2, true),
            ],
        }
    }

    /// Largest component-wise difference (meters / radians) to `other`,
    /// minimized over the equivalent parameterizations of `self`.
    pub fn param_error(&self, other: &ShapeParams) -> f64 {
        if self.kind() != other.kind() {
            return f64::INFINITY;
        }
        let y = other.to_vector();
        self.equivalent_forms()
            .iter()
            .map(|f| {
                let x = f.to_vector();
                x.iter()
                    .zip(&y)
                    .enumerate()
                    .map(|(i, (a, b))| if i == 3 { angle_diff(*a, *b).abs() } else { (a - b).abs() })
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<(), String> {
        let x = self.to_vector();
        if x.iter().any(|v| !v.is_finite()) {
            return Err("non-finite shape parameter".into());
        }
        if x[4..].iter().any(|&s| s <= 0.0) {
            return Err(format!("shape sizes must be positive, got {:?}", &x[4..]));
        }
        let yaw = x[3];
        if (normalize_angle(yaw) - yaw).abs() > 1e-12 {
            return Err(format!("yaw {yaw} not normalized to (-pi, pi]"));
        }
        Ok(())
    }
}
