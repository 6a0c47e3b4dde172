use ndarray::ArrayView2;

use super::{check_weights, SolveOutcome, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{dot, ColMatrix};
use crate::penalty::soft_threshold;

const POWER_ITERS: usize = 50;

/// Smooth part `(1/n) sum_i w_i (y_i - x_i'b)^2` with its cached Lipschitz
/// bound. Shared across every coefficient-weight vector on a lambda path.
#[derive(Debug, Clone)]
pub struct LeastSquaresLoss {
    x: ColMatrix,
    y: Vec<f64>,
    w: Vec<f64>,
    lipschitz: f64,
    /// `||grad f(0)||_inf`, the scale used by the optimality check.
    grad_scale: f64,
}

impl LeastSquaresLoss {
    pub fn new(x: ColMatrix, y: Vec<f64>, obs_weights: Vec<f64>) -> Result<Self> {
        let n = x.rows();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!("y has length {} but x has {n} rows", y.len())));
        }
        check_weights("obs_weights", &obs_weights, n)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("y"));
        }
        let mut loss = Self {
            x,
            y,
            w: obs_weights,
            lipschitz: 0.0,
            grad_scale: 0.0,
        };
        loss.lipschitz = loss.power_iteration();
        let wy: Vec<f64> = loss.w.iter().zip(&loss.y).map(|(w, y)| w * y).collect();
        let mut g = vec![0.0; loss.x.cols()];
        loss.x.tmul(&wy, &mut g);
        loss.grad_scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())) * 2.0 / n as f64;
        Ok(loss)
    }

    pub fn from_arrays(x: ArrayView2<'_, f64>, y: &[f64], obs_weights: &[f64]) -> Result<Self> {
        Self::new(ColMatrix::from_view(x), y.to_vec(), obs_weights.to_vec())
    }

    pub fn design(&self) -> &ColMatrix {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn obs_weights(&self) -> &[f64] {
        &self.w
    }

    /// Largest eigenvalue estimate of `(2/n) X'WX`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn power_iteration(&self) -> f64 {
        let (n, p) = (self.x.rows(), self.x.cols());
        let mut v = vec![1.0 / (p as f64).sqrt(); p];
        let mut xv = vec![0.0; n];
        let mut next = vec![0.0; p];
        let mut est = 0.0;
        for _ in 0..POWER_ITERS {
            self.x.mul_sparse(&v, &mut xv);
            xv.iter_mut().zip(&self.w).for_each(|(a, w)| *a *= w);
            self.x.tmul(&xv, &mut next);
            let norm = next.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                break;
            }
            // Rayleigh quotient v'Mv with ||v|| = 1.
            est = dot(&v, &next);
            v.iter_mut().zip(&next).for_each(|(a, b)| *a = b / norm);
        }
        (est * 2.0 / n as f64).max(f64::MIN_POSITIVE)
    }

    /// Writes `y - X b` into `r` and returns `(1/n) sum_i w_i r_i^2`.
    fn residual(&self, b: &[f64], r: &mut [f64]) -> f64 {
        self.x.mul_sparse(b, r);
        let mut acc = 0.0;
        for ((ri, yi), wi) in r.iter_mut().zip(&self.y).zip(&self.w) {
            *ri = yi - *ri;
            acc += wi * *ri * *ri;
        }
        acc / self.n() as f64
    }

    /// Smooth loss at `b`.
    pub fn value(&self, b: &[f64]) -> f64 {
        let mut r = vec![0.0; self.n()];
        self.residual(b, &mut r)
    }

    /// Gradient `-(2/n) X'W(y - Xb)`.
    pub fn gradient(&self, b: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n()];
        self.residual(b, &mut r);
        let mut g = vec![0.0; self.p()];
        self.grad_from_residual(&mut r, &mut g);
        g
    }

    /// Consumes the residual buffer (scaled in place).
    fn grad_from_residual(&self, r: &mut [f64], g: &mut [f64]) {
        let scale = -2.0 / self.n() as f64;
        r.iter_mut().zip(&self.w).for_each(|(a, w)| *a *= w * scale);
        self.x.tmul(r, g);
    }
}

/// A complete weighted-lasso instance.
#[derive(Debug, Clone)]
pub struct WeightedL1Problem {
    pub loss: LeastSquaresLoss,
    pub coef_weights: Vec<f64>,
}

impl WeightedL1Problem {
    pub fn new(x: ArrayView2<'_, f64>, y: &[f64], obs_weights: &[f64], coef_weights: &[f64]) -> Result<Self> {
        let loss = LeastSquaresLoss::from_arrays(x, y, obs_weights)?;
        check_weights("coef_weights", coef_weights, loss.p())?;
        Ok(Self {
            loss,
            coef_weights: coef_weights.to_vec(),
        })
    }

    pub fn objective(&self, b: &[f64]) -> f64 {
        self.loss.value(b) + 2.0 * l1_weighted(&self.coef_weights, b)
    }

    pub fn solve(&self, cfg: &SolverConfig, init: &[f64]) -> Result<SolveOutcome> {
        solve_weighted_l1_ls(&self.loss, &self.coef_weights, cfg, init)
    }
}

pub(crate) fn l1_weighted(c: &[f64], b: &[f64]) -> f64 {
    c.iter().zip(b).map(|(c, b)| c * b.abs()).sum()
}

/// Minimizes `(1/n) sum_i w_i (y_i - x_i'b)^2 + 2 sum_j c_j |b_j|` by monotone
/// FISTA with backtracking and momentum restarts. Stops once the relative
/// objective change drops below `inner_tol` and the gradient mapping is
/// small; otherwise returns the best iterate after `max_inner_iters`.
///
/// Large problems are solved on a working set: the nonzeros of `init`, the
/// unpenalized columns and every column violating the zero-coefficient
/// optimality condition. Columns that violate it after a restricted solve
/// are added and the solve repeated, so the result satisfies the full
/// optimality conditions. `max_inner_iters` bounds the total iteration count.
pub fn solve_weighted_l1_ls(
    loss: &LeastSquaresLoss,
    coef_weights: &[f64],
    cfg: &SolverConfig,
    init: &[f64],
) -> Result<SolveOutcome> {
    cfg.validate()?;
    let p = loss.p();
    check_weights("coef_weights", coef_weights, p)?;
    if init.len() != p {
        return Err(Error::DimensionMismatch(format!("init has length {} but p = {p}", init.len())));
    }
    let thresh: Vec<f64> = coef_weights.iter().map(|c| 2.0 * c).collect();
    let kkt_tol = cfg.kkt_tol() * loss.grad_scale;
    if p <= WORKING_SET_MIN_P {
        return Ok(fista(&mut ResidualOracle::new(loss), &thresh, cfg, cfg.max_inner_iters, kkt_tol, init));
    }

    let mut active = vec![false; p];
    let mut g = loss.gradient(init);
    for j in 0..p {
        active[j] = init[j] != 0.0 || thresh[j] == 0.0 || g[j].abs() > thresh[j] + kkt_tol;
    }
    let mut coef = init.to_vec();
    let mut iterations = 0;
    loop {
        let idx: Vec<usize> = (0..p).filter(|&j| active[j]).collect();
        let (sub_coef, converged) = if idx.is_empty() {
            (Vec::new(), true)
        } else {
            let sub_thresh: Vec<f64> = idx.iter().map(|&j| thresh[j]).collect();
            let sub_init: Vec<f64> = idx.iter().map(|&j| coef[j]).collect();
            let budget = cfg.max_inner_iters - iterations;
            let out = if idx.len() < loss.n() {
                let mut gram = GramOracle::new(loss, &idx);
                fista(&mut gram, &sub_thresh, cfg, budget, kkt_tol, &sub_init)
            } else {
                let sub = loss.restricted(&idx);
                fista(&mut ResidualOracle::new(&sub), &sub_thresh, cfg, budget, kkt_tol, &sub_init)
            };
            iterations += out.iterations;
            (out.coef, out.converged)
        };
        coef.iter_mut().for_each(|c| *c = 0.0);
        for (&j, v) in idx.iter().zip(&sub_coef) {
            coef[j] = *v;
        }
        let objective = loss.value(&coef) + l1_weighted(&thresh, &coef);
        if !converged || iterations >= cfg.max_inner_iters {
            return Ok(SolveOutcome {
                coef,
                objective,
                iterations,
                converged: converged && iterations < cfg.max_inner_iters,
            });
        }
        g = loss.gradient(&coef);
        let mut grew = false;
        for j in 0..p {
            if !active[j] && g[j].abs() > thresh[j] + kkt_tol {
                active[j] = true;
                grew = true;
            }
        }
        if !grew {
            return Ok(SolveOutcome {
                coef,
                objective,
                iterations,
                converged: true,
            });
        }
    }
}

/// Relative objective slack allowed by the backtracking test.
const LINE_SEARCH_SLACK: f64 = 1e-12;

/// Problems with at most this many columns skip the working-set loop.
const WORKING_SET_MIN_P: usize = 50;

impl LeastSquaresLoss {
    /// The same loss on a subset of columns.
    fn restricted(&self, idx: &[usize]) -> Self {
        let mut loss = Self {
            x: self.x.select_cols(idx),
            y: self.y.clone(),
            w: self.w.clone(),
            lipschitz: 0.0,
            grad_scale: self.grad_scale,
        };
        loss.lipschitz = loss.power_iteration();
        loss
    }
}

/// Smooth least-squares part as seen by the proximal gradient loop.
trait Smooth {
    fn lipschitz(&self) -> f64;
    fn value(&mut self, b: &[f64]) -> f64;
    /// Writes the gradient into `g` and returns the value.
    fn value_grad(&mut self, b: &[f64], g: &mut [f64]) -> f64;
}

/// Evaluates through the residual vector: `O(n p)` per call.
struct ResidualOracle<'a> {
    loss: &'a LeastSquaresLoss,
    r: Vec<f64>,
}

impl<'a> ResidualOracle<'a> {
    fn new(loss: &'a LeastSquaresLoss) -> Self {
        Self {
            loss,
            r: vec![0.0; loss.n()],
        }
    }
}

impl Smooth for ResidualOracle<'_> {
    fn lipschitz(&self) -> f64 {
        self.loss.lipschitz
    }

    fn value(&mut self, b: &[f64]) -> f64 {
        self.loss.residual(b, &mut self.r)
    }

    fn value_grad(&mut self, b: &[f64], g: &mut [f64]) -> f64 {
        let v = self.loss.residual(b, &mut self.r);
        self.loss.grad_from_residual(&mut self.r, g);
        v
    }
}

/// Evaluates through `X_A'WX_A` on a column subset `A`: `O(|A|^2)` per call.
struct GramOracle {
    k: usize,
    /// Row-major `(1/n) X_A'WX_A`.
    gram: Vec<f64>,
    /// `(1/n) X_A'Wy`
    xty: Vec<f64>,
    /// `(1/n) y'Wy`
    yty: f64,
    lipschitz: f64,
    gb: Vec<f64>,
}

impl GramOracle {
    fn new(loss: &LeastSquaresLoss, idx: &[usize]) -> Self {
        let k = idx.len();
        let inv_n = 1.0 / loss.n() as f64;
        let cols: Vec<Vec<f64>> = idx
            .iter()
            .map(|&j| loss.x.col(j).iter().zip(&loss.w).map(|(x, w)| x * w).collect())
            .collect();
        let mut gram = vec![0.0; k * k];
        for a in 0..k {
            for b in a..k {
                let v = dot(&cols[a], loss.x.col(idx[b])) * inv_n;
                gram[a * k + b] = v;
                gram[b * k + a] = v;
            }
        }
        let xty = cols.iter().map(|c| dot(c, &loss.y) * inv_n).collect();
        let yty = loss.y.iter().zip(&loss.w).map(|(y, w)| w * y * y).sum::<f64>() * inv_n;
        let mut oracle = Self {
            k,
            gram,
            xty,
            yty,
            lipschitz: 0.0,
            gb: vec![0.0; k],
        };
        oracle.lipschitz = oracle.power_iteration();
        oracle
    }

    fn gram_mul(&self, b: &[f64], out: &mut [f64]) {
        for (a, o) in out.iter_mut().enumerate() {
            *o = dot(&self.gram[a * self.k..(a + 1) * self.k], b);
        }
    }

    fn power_iteration(&self) -> f64 {
        let mut v = vec![1.0 / (self.k as f64).sqrt(); self.k];
        let mut next = vec![0.0; self.k];
        let mut est = 0.0;
        for _ in 0..POWER_ITERS {
            self.gram_mul(&v, &mut next);
            let norm = next.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                break;
            }
            est = dot(&v, &next);
            v.iter_mut().zip(&next).for_each(|(a, b)| *a = b / norm);
        }
        (2.0 * est).max(f64::MIN_POSITIVE)
    }
}

impl Smooth for GramOracle {
    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn value(&mut self, b: &[f64]) -> f64 {
        let mut gb = std::mem::take(&mut self.gb);
        self.gram_mul(b, &mut gb);
        let v = self.yty - 2.0 * dot(b, &self.xty) + dot(b, &gb);
        self.gb = gb;
        v.max(0.0)
    }

    fn value_grad(&mut self, b: &[f64], g: &mut [f64]) -> f64 {
        self.gram_mul(b, g);
        let v = self.yty - 2.0 * dot(b, &self.xty) + dot(b, g);
        for (gi, h) in g.iter_mut().zip(&self.xty) {
            *gi = 2.0 * (*gi - h);
        }
        v.max(0.0)
    }
}

fn fista(
    f: &mut impl Smooth,
    thresh: &[f64],
    cfg: &SolverConfig,
    max_iters: usize,
    kkt_tol: f64,
    init: &[f64],
) -> SolveOutcome {
    let p = thresh.len();
    let penalty = |b: &[f64]| l1_weighted(thresh, b);

    let mut lip = f.lipschitz();
    let mut x: Vec<f64> = init.to_vec();
    let mut fx = f.value(&x) + penalty(&x);
    let mut x_prev = x.clone();
    let mut z = x.clone();
    let mut t = 1.0f64;

    let mut g = vec![0.0; p];
    let mut xp = vec![0.0; p];
    let mut converged = false;
    let mut iterations = 0;
    let mut z_is_x = true;

    while iterations < max_iters {
        iterations += 1;
        let fz = f.value_grad(&z, &mut g);

        let mut fp;
        loop {
            for j in 0..p {
                xp[j] = soft_threshold(z[j] - g[j] / lip, thresh[j] / lip);
            }
            fp = f.value(&xp);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for j in 0..p {
                let d = xp[j] - z[j];
                lin += g[j] * d;
                sq += d * d;
            }
            let model = fz + lin + 0.5 * lip * sq;
            if fp <= model + LINE_SEARCH_SLACK * fz.abs().max(fp.abs()) || !lip.is_finite() {
                break;
            }
            lip /= cfg.backtrack_factor;
        }
        let mapping = xp
            .iter()
            .zip(&z)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            * lip;

        let fnew = fp + penalty(&xp);
        if fnew <= fx {
            let decrease = fx - fnew;
            x_prev.copy_from_slice(&x);
            x.copy_from_slice(&xp);
            fx = fnew;
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mom = (t - 1.0) / t_next;
            for j in 0..p {
                z[j] = x[j] + mom * (x[j] - x_prev[j]);
            }
            t = t_next;
            z_is_x = mom == 0.0;
            if decrease <= cfg.inner_tol * fx.abs() && mapping <= kkt_tol {
                converged = true;
                break;
            }
        } else {
            // A step from the best iterate that does not descend means the
            // remaining decrease is below the line-search slack, which caps
            // the attainable gradient mapping.
            let floor = (2.0 * LINE_SEARCH_SLACK * lip * fx.abs()).sqrt();
            if z_is_x && mapping <= kkt_tol.max(floor) {
                converged = true;
                break;
            }
            // Momentum overshoot: restart from the best iterate.
            z.copy_from_slice(&x);
            t = 1.0;
            z_is_x = true;
        }
    }

    SolveOutcome {
        coef: x,
        objective: fx,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky_solve;
    use ndarray::{array, Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_problem(n: usize, p: usize, seed: u64) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = (0..n)
            .map(|i| x[[i, 0]] - 0.5 * x[[i, 1 % p]] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
        (x, y, w)
    }

    /// Dense `(X'WX)^{-1} X'Wy`.
    fn wls_oracle(x: &Array2<f64>, y: &[f64], w: &[f64]) -> Array1<f64> {
        let p = x.ncols();
        let mut a = Array2::<f64>::zeros((p, p));
        let mut b = Array1::<f64>::zeros(p);
        for i in 0..x.nrows() {
            for j in 0..p {
                b[j] += w[i] * x[[i, j]] * y[i];
                for k in 0..p {
                    a[[j, k]] += w[i] * x[[i, j]] * x[[i, k]];
                }
            }
        }
        cholesky_solve(&a, &b).unwrap()
    }

    #[test]
    fn zero_penalty_matches_wls() {
        let cfg = SolverConfig::default();
        for seed in 0..5 {
            let (x, y, w) = random_problem(20, 3, seed);
            let prob = WeightedL1Problem::new(x.view(), &y, &w, &[0.0; 3]).unwrap();
            let out = prob.solve(&cfg, &[0.0; 3]).unwrap();
            let oracle = wls_oracle(&x, &y, &w);
            for j in 0..3 {
                assert!((out.coef[j] - oracle[j]).abs() < 1e-6, "seed {seed}: {:?} vs {oracle}", out.coef);
            }
            assert!(out.converged);
        }
    }

    #[test]
    fn huge_penalty_gives_zero() {
        let (x, y, w) = random_problem(30, 5, 3);
        let loss = LeastSquaresLoss::from_arrays(x.view(), &y, &w).unwrap();
        let big = 1e6 * loss.grad_scale;
        let out = solve_weighted_l1_ls(&loss, &[big; 5], &SolverConfig::default(), &[0.3; 5]).unwrap();
        assert!(out.coef.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn scalar_lasso_matches_grid_search() {
        // (1/2) sum_i (2 - b)^2 + 2 * 0.5 |b|, minimized at b = 1.5.
        let x = array![[1.0], [1.0]];
        let prob = WeightedL1Problem::new(x.view(), &[2.0, 2.0], &[1.0, 1.0], &[0.5]).unwrap();
        let out = prob.solve(&SolverConfig::default(), &[0.0]).unwrap();
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=1_000_000 {
            let b = -5.0 + 1e-5 * k as f64;
            let f = prob.objective(&[b]);
            if f < best.0 {
                best = (f, b);
            }
        }
        assert!((out.coef[0] - best.1).abs() < 1e-4);
        assert!((out.coef[0] - soft_threshold(2.0, 0.5)).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = array![[1.0], [1.0]];
        assert!(WeightedL1Problem::new(x.view(), &[1.0, 2.0], &[1.0, -1.0], &[0.0]).is_err());
        assert!(WeightedL1Problem::new(x.view(), &[1.0], &[1.0, 1.0], &[0.0]).is_err());
        let prob = WeightedL1Problem::new(x.view(), &[1.0, 2.0], &[1.0, 1.0], &[0.0]).unwrap();
        assert!(prob.solve(&SolverConfig::default(), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let (x, y, w) = random_problem(40, 10, 9);
        let prob = WeightedL1Problem::new(x.view(), &y, &w, &[0.01; 10]).unwrap();
        let cfg = SolverConfig {
            max_inner_iters: 2,
            ..SolverConfig::default()
        };
        let out = prob.solve(&cfg, &[0.0; 10]).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
        assert!(out.objective <= prob.objective(&[0.0; 10]));
    }

    #[test]
    fn lipschitz_estimate_bounds_curvature() {
        let (x, _, w) = random_problem(25, 4, 1);
        let loss = LeastSquaresLoss::from_arrays(x.view(), &[0.0; 25], &w).unwrap();
        // Rayleigh quotients of random directions stay below the estimate.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let v: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let nv = v.iter().map(|a| a * a).sum::<f64>();
            let xv = loss.design().mul_vec(&v);
            let q: f64 = xv.iter().zip(&w).map(|(a, w)| w * a * a).sum::<f64>() * 2.0 / 25.0;
            assert!(q / nv <= loss.lipschitz() * (1.0 + 1e-6));
        }
    }
}
