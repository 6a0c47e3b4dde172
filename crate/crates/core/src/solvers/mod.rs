//! Inner convex solvers and the LLA outer loop.
//!
//! * [`solve_weighted_l1_ls`]: `(1/n) sum_i w_i (y_i - x_i'b)^2 + 2 sum_j c_j |b_j|`
//!   by accelerated proximal gradient with backtracking.
//! * [`solve_variance_l1`]: `(1/n) sum_i [x_i't + e_i^2 exp(-x_i't)] + 4 sum_j c_j |t_j|`
//!   by cyclic coordinate descent.
//! * [`lla_solve`]: wraps either solver in local linear approximation
//!   iterations for the SCAD penalty.

mod least_squares;
mod lla;
mod variance;

pub use least_squares::{solve_weighted_l1_ls, LeastSquaresLoss, WeightedL1Problem};
pub use lla::{lla_solve, LlaOutcome, Subproblem};
pub use variance::{solve_variance_l1, VarianceLoss};
pub(crate) use variance::DEGENERATE_RATIO;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_inner_iters: usize,
    /// Relative objective change at which an inner solve stops.
    pub inner_tol: f64,
    pub max_lla_iters: usize,
    /// Max-norm parameter change at which LLA iterations stop.
    pub lla_tol: f64,
    pub backtrack_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_inner_iters: 2000,
            inner_tol: 1e-7,
            max_lla_iters: 10,
            lla_tol: 1e-6,
            backtrack_factor: 0.5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_inner_iters == 0 || self.max_lla_iters == 0 {
            return Err(Error::InvalidArgument("iteration limits must be positive".into()));
        }
        if !(self.inner_tol > 0.0 && self.lla_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidArgument("backtrack_factor must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Optimality-residual tolerance paired with `inner_tol`, relative to the
    /// gradient scale at zero.
    pub(crate) fn kkt_tol(&self) -> f64 {
        0.1 * self.inner_tol
    }
}

/// Result of one inner solve. Non-convergence is reported, never fatal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub coef: Vec<f64>,
    /// Final value of the (weighted-lasso) objective being minimized.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_weights(name: &'static str, w: &[f64], len: usize) -> Result<()> {
    if w.len() != len {
        return Err(Error::DimensionMismatch(format!("{name} has length {} but {len} is required", w.len())));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0")));
    }
    Ok(())
}
