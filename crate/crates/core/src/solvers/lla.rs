use serde::{Deserialize, Serialize};

use super::{solve_variance_l1, solve_weighted_l1_ls, LeastSquaresLoss, SolveOutcome, SolverConfig, VarianceLoss};
use crate::error::{Error, Result};
use crate::penalty::{lla_weights, PenaltyFamily, PenaltySpec};

/// Which penalized pseudolikelihood an LLA run minimizes.
#[derive(Debug, Clone, Copy)]
pub enum Subproblem<'a> {
    /// `loss + 2 sum_j rho(|b_j|)`
    Mean(&'a LeastSquaresLoss),
    /// `loss + 4 sum_j rho(|t_j|)`
    Variance(&'a VarianceLoss),
}

impl Subproblem<'_> {
    fn p(&self) -> usize {
        match self {
            Subproblem::Mean(l) => l.p(),
            Subproblem::Variance(l) => l.p(),
        }
    }

    fn penalty_multiplier(&self) -> f64 {
        match self {
            Subproblem::Mean(_) => 2.0,
            Subproblem::Variance(_) => 4.0,
        }
    }

    fn smooth(&self, v: &[f64]) -> f64 {
        match self {
            Subproblem::Mean(l) => l.value(v),
            Subproblem::Variance(l) => l.value(v),
        }
    }

    fn inner(&self, weights: &[f64], cfg: &SolverConfig, init: &[f64]) -> Result<SolveOutcome> {
        match self {
            Subproblem::Mean(l) => solve_weighted_l1_ls(l, weights, cfg, init),
            Subproblem::Variance(l) => solve_variance_l1(l, weights, cfg, init),
        }
    }

    /// Objective with the exact (non-linearized) penalty.
    pub fn penalized_objective(&self, spec: &PenaltySpec, penalized: &[bool], v: &[f64]) -> f64 {
        self.smooth(v) + self.penalty_multiplier() * spec.total(v, penalized)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlaOutcome {
    pub coef: Vec<f64>,
    /// Penalized objective (with the exact penalty) after each LLA iterate,
    /// starting with the lasso initialization.
    pub objective_trace: Vec<f64>,
    pub lla_iterations: usize,
    pub inner_iterations: usize,
    /// Every inner solve converged and the LLA loop met `lla_tol`.
    pub converged: bool,
}

impl LlaOutcome {
    /// Largest increase between consecutive trace entries, relative to the
    /// magnitude of the objective (`0` for a monotone trace).
    pub fn max_trace_increase(&self) -> f64 {
        self.objective_trace
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0].abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

/// Local linear approximation driver.
///
/// Iterate 0 solves the lasso problem (`rho'(0) = lambda` everywhere). Each
/// later iterate re-solves with weights `rho'(|previous_j|)`, warm-started at
/// the previous solution, until the max-norm change falls below `lla_tol`
/// or `max_lla_iters` reweighted solves have run. With an L1 spec exactly one
/// inner solve is performed. Positions where `penalized[j]` is false always
/// get weight zero.
pub fn lla_solve(
    sub: Subproblem<'_>,
    penalized: &[bool],
    spec: &PenaltySpec,
    cfg: &SolverConfig,
    init: &[f64],
) -> Result<LlaOutcome> {
    let p = sub.p();
    if penalized.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "penalty mask has length {} but p = {p}",
            penalized.len()
        )));
    }
    let weights0 = lla_weights(spec, &vec![0.0; p], penalized);
    let first = sub.inner(&weights0, cfg, init)?;
    let mut converged = first.converged;
    let mut inner_iterations = first.iterations;
    let mut coef = first.coef;
    let mut trace = vec![sub.penalized_objective(spec, penalized, &coef)];
    let mut lla_iterations = 0;

    if spec.family == PenaltyFamily::L1 {
        return Ok(LlaOutcome {
            coef,
            objective_trace: trace,
            lla_iterations,
            inner_iterations,
            converged,
        });
    }

    let mut lla_converged = false;
    while lla_iterations < cfg.max_lla_iters {
        lla_iterations += 1;
        let w = lla_weights(spec, &coef, penalized);
        let out = sub.inner(&w, cfg, &coef)?;
        converged &= out.converged;
        inner_iterations += out.iterations;
        let change = out
            .coef
            .iter()
            .zip(&coef)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        coef = out.coef;
        trace.push(sub.penalized_objective(spec, penalized, &coef));
        if change < cfg.lla_tol {
            lla_converged = true;
            break;
        }
    }

    Ok(LlaOutcome {
        coef,
        objective_trace: trace,
        lla_iterations,
        inner_iterations,
        converged: converged && lla_converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ColMatrix;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn sparse_ls(seed: u64) -> LeastSquaresLoss {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, p) = (80, 12);
        let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = (0..n)
            .map(|i| 3.0 * x[[i, 0]] - 2.0 * x[[i, 3]] + 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        LeastSquaresLoss::from_arrays(x.view(), &y, &vec![1.0; n]).unwrap()
    }

    #[test]
    fn l1_is_single_inner_solve() {
        let loss = sparse_ls(1);
        let spec = PenaltySpec::l1(0.2).unwrap();
        let cfg = SolverConfig::default();
        let mask = vec![true; 12];
        let out = lla_solve(Subproblem::Mean(&loss), &mask, &spec, &cfg, &[0.0; 12]).unwrap();
        let direct = solve_weighted_l1_ls(&loss, &[0.2; 12], &cfg, &[0.0; 12]).unwrap();
        assert_eq!(out.coef, direct.coef);
        assert_eq!(out.objective_trace.len(), 1);
        assert_eq!(out.lla_iterations, 0);
    }

    #[test]
    fn scad_debiases_large_coefficients() {
        // With both true coefficients far above a*lambda, the second iterate
        // leaves them unpenalized.
        let loss = sparse_ls(2);
        let spec = PenaltySpec::scad(0.1).unwrap();
        let cfg = SolverConfig::default();
        let mask = vec![true; 12];
        let out = lla_solve(Subproblem::Mean(&loss), &mask, &spec, &cfg, &[0.0; 12]).unwrap();
        assert!(out.objective_trace.len() >= 2);
        assert!(out.objective_trace[1] < out.objective_trace[0]);
        assert!(out.max_trace_increase() <= 1e-9);
        let l1 = PenaltySpec::l1(0.1).unwrap();
        let lasso = lla_solve(Subproblem::Mean(&loss), &mask, &l1, &cfg, &[0.0; 12]).unwrap();
        assert!((out.coef[0] - 3.0).abs() < (lasso.coef[0] - 3.0).abs());
    }

    #[test]
    fn zero_design_returns_zero() {
        let x = ColMatrix::from_view(Array2::<f64>::zeros((10, 3)).view());
        let loss = LeastSquaresLoss::new(x, vec![1.0; 10], vec![1.0; 10]).unwrap();
        let spec = PenaltySpec::scad(0.5).unwrap();
        let out = lla_solve(Subproblem::Mean(&loss), &[true; 3], &spec, &SolverConfig::default(), &[0.0; 3]).unwrap();
        assert_eq!(out.coef, vec![0.0; 3]);
        assert_eq!(out.lla_iterations, 1);
    }

    #[test]
    fn mask_length_checked() {
        let loss = sparse_ls(3);
        let spec = PenaltySpec::scad(0.5).unwrap();
        assert!(lla_solve(Subproblem::Mean(&loss), &[true; 2], &spec, &SolverConfig::default(), &[0.0; 12]).is_err());
    }
}
