//! Fixtures shared by the benchmarks.

use hippo_core::evalsim::{generate_example1, generate_example2, TrueModel};
use hippo_core::solvers::{LeastSquaresLoss, VarianceLoss};
use hippo_core::{residuals, Dataset, ModelParams};

/// An Example 2 draw with its truth.
pub fn example2(n: usize, seed: u64) -> (Dataset, TrueModel) {
    generate_example2(n, seed).expect("valid example 2 parameters")
}

/// An Example 1 draw with `p` covariates.
pub fn example1(n: usize, p: usize, seed: u64) -> (Dataset, TrueModel) {
    generate_example1(n, p, 0.0, seed).expect("valid example 1 parameters")
}

/// Unit-weight least squares on the slopes of `d` (no intercept column).
pub fn mean_loss(d: &Dataset) -> LeastSquaresLoss {
    let w = vec![1.0; d.n()];
    LeastSquaresLoss::from_arrays(d.x().view(), d.y().as_slice().expect("contiguous"), &w).expect("finite data")
}

/// Variance loss on the squared residuals of the true mean.
pub fn variance_loss(d: &Dataset, truth: &TrueModel) -> VarianceLoss {
    let params = ModelParams::new(
        truth.beta_star.clone(),
        truth.theta_star.clone(),
        truth.mean_intercept,
        truth.var_intercept,
    )
    .expect("consistent truth");
    let r = residuals(d, &params).expect("consistent truth");
    let sq: Vec<f64> = r.iter().map(|v| v * v).collect();
    VarianceLoss::from_arrays(d.x().view(), &sq).expect("finite data")
}

/// Penalty level as a fraction of the largest absolute gradient entry at zero.
pub fn scaled_penalty(gradient_at_zero: &[f64], fraction: f64, factor: f64) -> f64 {
    fraction * gradient_at_zero.iter().fold(0.0f64, |m, g| m.max(g.abs())) / factor
}
