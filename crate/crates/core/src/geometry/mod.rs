//! Camera model, rigid transforms, shape parameterizations and 2D primitives.

pub mod camera;
pub mod polygon;
pub mod pose;
pub mod scalar;
pub mod shapes;

pub use camera::{project, project_with_min_depth, CameraIntrinsics, DEFAULT_MIN_DEPTH};
pub use polygon::{
    convex_hull, convex_polygon_iou, min_area_obb, point_in_polygon, polygon_area, polygon_centroid, Aabb2,
    OrientedBox2D, Polygon,
};
pub use pose::Pose;
pub use shapes::{
    normalize_angle, CircleSignParams, CuboidParams, RectSignParams, ShapeKind, ShapeParams,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("point behind camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}
