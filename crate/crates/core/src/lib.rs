//! Sparse heteroscedastic linear regression.
//!
//! The model is `y_i = x_i'beta + exp(x_i'theta / 2) eps_i`. The three-stage
//! estimator fits a penalized least-squares mean, a penalized variance
//! pseudolikelihood on the squared residuals, and a reweighted penalized
//! least-squares mean, with SCAD penalties handled through local linear
//! approximation. The same driver with lasso penalties gives the HHR
//! baseline.

pub mod error;
pub mod evalsim;
pub mod linalg;
pub mod model;
pub mod penalty;
pub mod pipeline;
pub mod solvers;

pub use error::{Error, Result};
pub use model::{neg_log_likelihood, predict_mean, residuals, variance_scale, Dataset, ModelParams};
pub use penalty::{lla_weights, penalty_derivative, penalty_value, soft_threshold, PenaltyFamily, PenaltySpec};
pub use solvers::{lla_solve, solve_variance_l1, solve_weighted_l1_ls, SolverConfig};
