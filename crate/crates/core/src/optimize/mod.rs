//! Robust nonlinear refinement of shape parameters against reprojection
//! residuals.

pub mod huber;
pub mod jet;
mod lm;
pub mod residuals;

use serde::{Deserialize, Serialize};

pub use huber::huber_loss;
pub use lm::refine;
pub use residuals::{
    jacobian, rect_residuals, residuals, residuals_generic, support_jacobian, support_residuals, FitObservation, Residuals, SUPPORT_WEIGHT,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Pixels. `inf` disables the robust loss.
    pub huber_delta: f64,
    pub max_iterations: usize,
    pub cost_rel_tol: f64,
    pub param_abs_tol: f64,
    pub initial_damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            huber_delta: 1.0,
            max_iterations: 100,
            cost_rel_tol: 1e-8,
            param_abs_tol: 1e-10,
            initial_damping: 1e-4,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), String> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(format!("solver option {name} must be positive, got {v}"))
            }
        };
        pos("huber_delta", self.huber_delta)?;
        pos("cost_rel_tol", self.cost_rel_tol)?;
        pos("param_abs_tol", self.param_abs_tol)?;
        pos("initial_damping", self.initial_damping)?;
        if self.max_iterations == 0 {
            return Err("solver option max_iterations must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Pixels, averaged over residual blocks.
    pub mean_reproj_error: f64,
    pub n_residuals: usize,
    #[serde(default)]
    pub n_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("insufficient observations: need {needed}, got {got}")]
    InsufficientObservations { needed: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidOptions(String),
}
