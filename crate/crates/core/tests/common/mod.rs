//! Independent reference computations shared by the oracle tests and the
//! acceptance suite. Every function returns the worst discrepancy found so
//! callers can both assert and report it.
#![allow(dead_code)]

use hippo_core::linalg::cholesky_solve;
use hippo_core::solvers::{LeastSquaresLoss, VarianceLoss};
use hippo_core::{soft_threshold, solve_variance_l1, solve_weighted_l1_ls, SolverConfig};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_matrix(r: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| r.sample(StandardNormal))
}

/// Dense weighted least squares `(X'WX)^-1 X'Wy` by Cholesky.
pub fn wls_closed_form(x: &Array2<f64>, y: &[f64], w: &[f64]) -> Array1<f64> {
    let (n, p) = x.dim();
    let mut a = Array2::<f64>::zeros((p, p));
    let mut b = Array1::<f64>::zeros(p);
    for i in 0..n {
        for j in 0..p {
            b[j] += w[i] * x[[i, j]] * y[i];
            for k in 0..p {
                a[[j, k]] += w[i] * x[[i, j]] * x[[i, k]];
            }
        }
    }
    cholesky_solve(&a, &b).expect("positive definite normal equations")
}

/// Zero-penalty weighted lasso against the closed form on `count` random
/// 20x3 instances with positive observation weights.
pub fn wls_max_error(count: u64) -> f64 {
    let cfg = SolverConfig::default();
    let mut worst = 0.0f64;
    for seed in 0..count {
        let mut r = rng(1000 + seed);
        let x = normal_matrix(&mut r, 20, 3);
        let y: Vec<f64> = (0..20).map(|_| r.sample(StandardNormal)).collect();
        let w: Vec<f64> = (0..20).map(|_| r.random_range(0.2..3.0)).collect();
        let loss = LeastSquaresLoss::from_arrays(x.view(), &y, &w).unwrap();
        let out = solve_weighted_l1_ls(&loss, &[0.0; 3], &cfg, &[0.0; 3]).unwrap();
        let exact = wls_closed_form(&x, &y, &w);
        for j in 0..3 {
            worst = worst.max((out.coef[j] - exact[j]).abs());
        }
    }
    worst
}

/// Largest violation of the subgradient optimality conditions
/// `g_j + t_j sign(b_j) = 0` (nonzero) or `|g_j| <= t_j` (zero).
pub fn kkt_residual(grad: &[f64], coef: &[f64], thresh: &[f64]) -> f64 {
    grad.iter()
        .zip(coef)
        .zip(thresh)
        .map(|((g, b), t)| if *b != 0.0 { (g + t * b.signum()).abs() } else { (g.abs() - t).max(0.0) })
        .fold(0.0, f64::max)
}

/// Random heteroscedastic instance: design, response, squared residuals.
fn instance(seed: u64, n: usize, p: usize) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
    let mut r = rng(2000 + seed);
    let x = normal_matrix(&mut r, n, p);
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let mean = 1.5 * x[[i, 0]] - x[[i, 1]];
            let sd = (0.5 * x[[i, 2]]).exp();
            mean + sd * r.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let e2: Vec<f64> = (0..n)
        .map(|i| ((0.6 * x[[i, 0]]).exp() * r.sample::<f64, _>(StandardNormal)).powi(2))
        .collect();
    (x, y, e2)
}

/// Worst KKT residual of both solvers over `count` random `n x p`
/// instances with varying penalty levels. Returns `(least squares, variance)`.
pub fn kkt_max_residuals(count: u64, n: usize, p: usize) -> (f64, f64) {
    let cfg = SolverConfig::default();
    let (mut ls_worst, mut var_worst) = (0.0f64, 0.0f64);
    for seed in 0..count {
        let (x, y, e2) = instance(seed, n, p);
        let mut r = rng(3000 + seed);
        let level = 10f64.powf(r.random_range(-2.5..-0.5));
        let c: Vec<f64> = (0..p).map(|j| if j == 0 && seed % 3 == 0 { 0.0 } else { level * r.random_range(0.5..1.5) }).collect();
        let w: Vec<f64> = (0..n).map(|_| r.random_range(0.3..2.0)).collect();

        let ls = LeastSquaresLoss::from_arrays(x.view(), &y, &w).unwrap();
        let out = solve_weighted_l1_ls(&ls, &c, &cfg, &vec![0.0; p]).unwrap();
        let t: Vec<f64> = c.iter().map(|c| 2.0 * c).collect();
        ls_worst = ls_worst.max(kkt_residual(&ls.gradient(&out.coef), &out.coef, &t));

        let var = VarianceLoss::from_arrays(x.view(), &e2).unwrap();
        let out = solve_variance_l1(&var, &c, &cfg, &vec![0.0; p]).unwrap();
        let t: Vec<f64> = c.iter().map(|c| 4.0 * c).collect();
        var_worst = var_worst.max(kkt_residual(&var.gradient(&out.coef), &out.coef, &t));
    }
    (ls_worst, var_worst)
}

/// Coordinate descent on a two-coefficient variance problem (intercept and
/// one penalized slope) against exhaustive search over `[-2, 2]^2` with
/// step `1e-3`. Returns the worst coordinate distance over `count` instances.
pub fn variance_grid_max_error(count: u64) -> f64 {
    const STEPS: usize = 4001;
    let grid: Vec<f64> = (0..STEPS).map(|k| -2.0 + 1e-3 * k as f64).collect();
    let cfg = SolverConfig::default();
    let mut worst = 0.0f64;
    for seed in 0..count {
        let mut r = rng(4000 + seed);
        let n = 40;
        let z: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let (t0, t1) = (r.random_range(-0.8..0.8), r.random_range(-0.8..0.8));
        let e2: Vec<f64> = z
            .iter()
            .map(|zi| ((t0 + t1 * zi).exp() * r.sample::<f64, _>(StandardNormal).powi(2)).max(1e-6))
            .collect();
        let c1 = if seed % 2 == 0 { 0.0 } else { 0.02 };
        let x = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { 1.0 } else { z[i] });
        let loss = VarianceLoss::from_arrays(x.view(), &e2).unwrap();
        let out = solve_variance_l1(&loss, &[0.0, c1], &cfg, &[0.0, 0.0]).unwrap();

        // exp(-t0 - t1 z) factorizes, so the data term over the grid is a
        // sum of rank-one products.
        let zbar = z.iter().sum::<f64>() / n as f64;
        let b: Vec<Vec<f64>> = z.iter().map(|zi| grid.iter().map(|t| (-t * zi).exp()).collect()).collect();
        let a: Vec<f64> = grid.iter().map(|t| (-t).exp()).collect();
        let mut best = (f64::INFINITY, 0usize, 0usize);
        // Objective: t0 + t1 zbar + exp(-t0) m(t1) + 4 c |t1|.
        for (k1, t1g) in grid.iter().enumerate() {
            let m: f64 = (0..n).map(|i| e2[i] * b[i][k1]).sum::<f64>() / n as f64;
            let lin1 = t1g * zbar + 4.0 * c1 * t1g.abs();
            for (k0, t0g) in grid.iter().enumerate() {
                let f = t0g + lin1 + m * a[k0];
                if f < best.0 {
                    best = (f, k0, k1);
                }
            }
        }
        worst = worst.max((out.coef[0] - grid[best.1]).abs()).max((out.coef[1] - grid[best.2]).abs());
    }
    worst
}

/// Intercept-only variance fit against `log(mean e^2)`, and a one-column
/// lasso against the soft-threshold formula. Returns `(variance, lasso)`.
pub fn analytic_max_errors(count: u64) -> (f64, f64) {
    let cfg = SolverConfig::default();
    let (mut var_worst, mut lasso_worst) = (0.0f64, 0.0f64);
    for seed in 0..count {
        let mut r = rng(5000 + seed);
        let n = r.random_range(5..60);
        let e2: Vec<f64> = (0..n).map(|_| r.random_range(0.01..5.0f64)).collect();
        let ones = Array2::from_elem((n, 1), 1.0);
        let loss = VarianceLoss::from_arrays(ones.view(), &e2).unwrap();
        let out = solve_variance_l1(&loss, &[0.0], &cfg, &[0.0]).unwrap();
        let exact = (e2.iter().sum::<f64>() / n as f64).ln();
        var_worst = var_worst.max((out.coef[0] - exact).abs());

        // (1/n) sum (y_i - x_i b)^2 + 2 c |b| is minimized at
        // S(x'y / x'x, c n / x'x).
        let x: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let y: Vec<f64> = x.iter().map(|xi| 0.7 * xi + r.sample::<f64, _>(StandardNormal)).collect();
        let c = r.random_range(0.0..0.8);
        let xx: f64 = x.iter().map(|v| v * v).sum();
        let xy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let exact = soft_threshold(xy / xx, c * n as f64 / xx);
        let xm = Array2::from_shape_vec((n, 1), x).unwrap();
        let loss = LeastSquaresLoss::from_arrays(xm.view(), &y, &vec![1.0; n]).unwrap();
        let out = solve_weighted_l1_ls(&loss, &[c], &cfg, &[0.0]).unwrap();
        lasso_worst = lasso_worst.max((out.coef[0] - exact).abs());
    }
    (var_worst, lasso_worst)
}
