use nalgebra::{DMatrix, DVector, Vector3};

use super::huber::huber_loss;
use super::residuals::{block_dim, evaluate, evaluate_with_jacobian, residuals, FitObservation};
use super::{FitReport, SolverError, SolverOptions};
use crate::geometry::{normalize_angle, ShapeKind, ShapeParams};

const MIN_SIZE: f64 = 1e-6;
const GRADIENT_TOL: f64 = 1e-12;
const MAX_DAMPING: f64 = 1e16;

fn robust_cost(values: &[f64], dim: usize, delta: f64) -> f64 {
    values.chunks(dim).map(|b| huber_loss(b.iter().map(|v| v * v).sum::<f64>().sqrt(), delta).0).sum()
}

fn mean_block_norm(values: &[f64], dim: usize) -> f64 {
    let n = values.len() / dim;
    if n == 0 {
        return 0.0;
    }
    values.chunks(dim).map(|b| b.iter().map(|v| v * v).sum::<f64>().sqrt()).sum::<f64>() / n as f64
}

fn sanitize(kind: ShapeKind, x: &mut [f64]) {
    x[3] = normalize_angle(x[3]);
    for s in x[4..kind.dof()].iter_mut() {
        *s = s.max(MIN_SIZE);
    }
}

/// Robust Levenberg–Marquardt refinement of `initial` against the
/// reprojection residuals of `observations`.
pub fn refine(
    initial: &ShapeParams,
    observations: &[FitObservation],
    support: &[Vector3<f64>],
    opts: &SolverOptions,
) -> Result<(ShapeParams, FitReport), SolverError> {
    opts.validate().map_err(SolverError::InvalidOptions)?;
    let initial = &initial.normalized();
    initial.validate().map_err(SolverError::InvalidOptions)?;
    let kind = initial.kind();
    let dim = block_dim(kind);
    let start = residuals(initial, observations);
    let active: Vec<FitObservation> = start.used.iter().map(|&i| observations[i]).collect();
    if active.len() < 2 {
        return Err(SolverError::InsufficientObservations { needed: 2, got: active.len() });
    }
    let delta = opts.huber_delta;
    let mut x = initial.to_vector();
    let n_image = start.values.len();
    let mut values = start.values;
    values.extend(super::residuals::support_residuals(initial, support));
    let mut cost = robust_cost(&values, dim, delta);
    if !cost.is_finite() {
        return Err(SolverError::NumericalFailure("non-finite initial cost".into()));
    }
    let initial_cost = cost;
    let mut lambda = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let (r, j) = evaluate_with_jacobian(kind, &x, &active, support)
            .ok_or_else(|| SolverError::NumericalFailure("accepted point left the camera frustum".into()))?;
        if j.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NumericalFailure("non-finite Jacobian".into()));
        }
        let dof = kind.dof();
        let mut h = DMatrix::<f64>::zeros(dof, dof);
        let mut g = DVector::<f64>::zeros(dof);
        for (b, rb) in r.chunks(dim).enumerate() {
            let norm = rb.iter().map(|v| v * v).sum::<f64>().sqrt();
            let w = huber_loss(norm, delta).1;
            let jb = j.rows(b * dim, dim);
            let rv = DVector::from_column_slice(rb);
            h += (jb.transpose() * jb) * w;
            g += (jb.transpose() * rv) * w;
        }
        if g.amax() <= GRADIENT_TOL {
            converged = true;
            break;
        }
        let diag_floor = h.diagonal().max() * 1e-12 + 1e-300;
        let mut a = h.clone();
        for i in 0..dof {
            a[(i, i)] += lambda * h[(i, i)].max(diag_floor);
        }
        let step = a.cholesky().map(|c| c.solve(&(-&g)));
        let Some(step) = step else {
            lambda *= 10.0;
            if lambda > MAX_DAMPING {
                break;
            }
            continue;
        };
        let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        sanitize(kind, &mut trial);
        let step_size = step.amax();
        let trial_values = evaluate(kind, &trial, &active, support);
        let trial_cost = trial_values.as_ref().map(|v| robust_cost(v, dim, delta));
        if let Some(c) = trial_cost {
            if c.is_nan() {
                return Err(SolverError::NumericalFailure("non-finite cost".into()));
            }
        }
        match (trial_values, trial_cost) {
            (Some(v), Some(c)) if c < cost => {
                let decrease = cost - c;
                x = trial;
                values = v;
                let prev = cost;
                cost = c;
                lambda = (lambda / 10.0).max(1e-15);
                if decrease <= opts.cost_rel_tol * prev || step_size < opts.param_abs_tol {
                    converged = true;
                    break;
                }
            }
            _ => {
                lambda *= 10.0;
                if step_size < opts.param_abs_tol || lambda > MAX_DAMPING {
                    converged = step_size < opts.param_abs_tol;
                    break;
                }
            }
        }
    }

    let mut params = ShapeParams::from_vector(kind, &x);
    if kind != ShapeKind::Rect {
        params = face_cameras(&params, &active);
    }
    let report = FitReport {
        initial_cost,
        final_cost: cost,
        iterations,
        converged,
        mean_reproj_error: mean_block_norm(&values[..n_image], dim),
        n_residuals: values.len(),
        n_dropped: start.dropped,
    };
    Ok((params.normalized(), report))
}

/// Picks the yaw (of the two describing the same point set) whose front
/// normal points towards the mean camera center.
pub(crate) fn face_cameras(params: &ShapeParams, observations: &[FitObservation]) -> ShapeParams {
    if observations.is_empty() {
        return *params;
    }
    let mean = observations.iter().map(|o| o.frame.camera_center()).sum::<nalgebra::Vector3<f64>>()
        / observations.len() as f64;
    if (mean - params.center()).dot(&params.normal()) >= 0.0 {
        return *params;
    }
    let mut x = params.to_vector();
    x[3] = normalize_angle(x[3] + std::f64::consts::PI);
    ShapeParams::from_vector(params.kind(), &x)
}
