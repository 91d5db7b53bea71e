use nalgebra::{DMatrix, DVector, Matrix3, Point2, Vector3};

use super::{triangulate_point, ProposalError, ProposalParams};
use crate::geometry::shapes::yaw_from_normal;
use crate::geometry::CircleSignParams;
use crate::optimize::FitObservation;
use crate::scene::CameraFrame;

/// Total-least-squares plane: returns the centroid and unit normal
/// (eigenvector of the smallest covariance eigenvalue).
pub fn fit_plane(points: &[Vector3<f64>]) -> Result<(Vector3<f64>, Vector3<f64>), ProposalError> {
    if points.len() < 3 {
        return Err(ProposalError::DegeneratePlane);
    }
    let mean = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[idx[2]];
    if !(largest > 0.0) || eig.eigenvalues[idx[1]] <= 1e-12 * largest {
        return Err(ProposalError::DegeneratePlane);
    }
    Ok((mean, eig.eigenvectors.column(idx[0]).into_owned()))
}

/// Fits an upright circle to 3D points: plane by total least squares, then
/// an algebraic (Kåsa) circle in the plane. The front normal is oriented
/// towards `viewpoint`.
pub fn fit_circle_to_points(
    points: &[Vector3<f64>],
    viewpoint: &Vector3<f64>,
    min_points: usize,
) -> Result<CircleSignParams, ProposalError> {
    if points.len() < min_points.max(3) {
        return Err(ProposalError::InsufficientObservations { needed: min_points.max(3), got: points.len() });
    }
    let (mean, normal) = fit_plane(points)?;
    let mut n = Vector3::new(normal.x, normal.y, 0.0);
    if n.norm() < 1e-9 {
        return Err(ProposalError::DegeneratePlane);
    }
    n.normalize_mut();
    if (viewpoint - mean).dot(&n) < 0.0 {
        n = -n;
    }
    let a = Vector3::new(-n.y, n.x, 0.0);
    let up = Vector3::z();
    let m = points.len();
    let mut lhs = DMatrix::<f64>::zeros(m, 3);
    let mut rhs = DVector::<f64>::zeros(m);
    for (i, p) in points.iter().enumerate() {
        let d = p - mean;
        let (u, v) = (d.dot(&a), d.dot(&up));
        lhs[(i, 0)] = u;
        lhs[(i, 1)] = v;
        lhs[(i, 2)] = 1.0;
        rhs[i] = -(u * u + v * v);
    }
    let sol = lhs.svd(true, true).solve(&rhs, 1e-14).map_err(|_| ProposalError::DegeneratePlane)?;
    let (cu, cv) = (-sol[0] / 2.0, -sol[1] / 2.0);
    let r2 = cu * cu + cv * cv - sol[2];
    if !(r2 > 0.0) {
        return Err(ProposalError::DegeneratePlane);
    }
    Ok(CircleSignParams { center: mean + a * cu + up * cv, yaw: yaw_from_normal(&n), radius: r2.sqrt() })
}

/// Triangulates each angular contour bin across the unoccluded views and
/// fits a circle to the resulting points.
pub fn fit_circle_params(obs: &[FitObservation], params: &ProposalParams) -> Result<CircleSignParams, ProposalError> {
    let keep: Vec<&FitObservation> = obs.iter().filter(|o| !o.vertices.occluded).collect();
    if keep.len() < params.min_views {
        return Err(ProposalError::InsufficientObservations { needed: params.min_views, got: keep.len() });
    }
    let bins = keep.iter().map(|o| o.vertices.corners.len()).min().unwrap_or(0);
    let mut points = Vec::with_capacity(bins);
    for k in 0..bins {
        let views: Vec<(&CameraFrame, Point2<f64>)> = keep.iter().map(|o| (o.frame, o.vertices.corners[k])).collect();
        if let Ok(p) = triangulate_point(&views, params) {
            points.push(p);
        }
    }
    let viewpoint = keep.iter().map(|o| o.frame.camera_center()).sum::<Vector3<f64>>() / keep.len() as f64;
    fit_circle_to_points(&points, &viewpoint, params.min_contour_points)
}
