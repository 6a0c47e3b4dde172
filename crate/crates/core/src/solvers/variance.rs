use ndarray::ArrayView2;

use super::{check_weights, SolveOutcome, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::ColMatrix;
use crate::penalty::soft_threshold;

const MAX_HALVINGS: usize = 50;
const FULL_CYCLES_BEFORE_ACTIVE_SET: usize = 2;

/// Smooth part `(1/n) sum_i [x_i't + e_i^2 exp(-x_i't)]` of the variance
/// pseudolikelihood, for fixed squared residuals `e_i^2`.
#[derive(Debug, Clone)]
pub struct VarianceLoss {
    x: ColMatrix,
    sq_resid: Vec<f64>,
    /// Column means of `x`: the derivative of the linear term.
    col_means: Vec<f64>,
}

/// Below this (relative to the mean square of the response) the residuals
/// are treated as identically zero.
pub(crate) const DEGENERATE_RATIO: f64 = 1e-18;

impl VarianceLoss {
    pub fn new(x: ColMatrix, sq_residuals: Vec<f64>) -> Result<Self> {
        let n = x.rows();
        check_weights("sq_residuals", &sq_residuals, n)?;
        if sq_residuals.iter().all(|&e| e == 0.0) {
            return Err(Error::DegenerateResiduals);
        }
        let col_means = (0..x.cols()).map(|j| x.col(j).iter().sum::<f64>() / n as f64).collect();
        Ok(Self {
            x,
            sq_resid: sq_residuals,
            col_means,
        })
    }

    pub fn from_arrays(x: ArrayView2<'_, f64>, sq_residuals: &[f64]) -> Result<Self> {
        Self::new(ColMatrix::from_view(x), sq_residuals.to_vec())
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn design(&self) -> &ColMatrix {
        &self.x
    }

    pub fn sq_residuals(&self) -> &[f64] {
        &self.sq_resid
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let lin = self.x.mul_vec(theta);
        lin.iter()
            .zip(&self.sq_resid)
            .map(|(l, e)| l + e * (-l).exp())
            .sum::<f64>()
            / self.n() as f64
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let lin = self.x.mul_vec(theta);
        let v: Vec<f64> = lin
            .iter()
            .zip(&self.sq_resid)
            .map(|(l, e)| (1.0 - e * (-l).exp()) / self.n() as f64)
            .collect();
        let mut g = vec![0.0; self.p()];
        self.x.tmul(&v, &mut g);
        g
    }
}

/// Minimizes `(1/n) sum_i [x_i't + e_i^2 exp(-x_i't)] + 4 sum_j c_j |t_j|` by
/// cyclic coordinate descent. Each coordinate takes a Newton step on the
/// smooth part, soft-thresholds it at `4 c_j / h_jj`, and halves the step
/// until the coordinate objective does not increase. After two full cycles
/// only the active set is swept; a full sweep must confirm convergence.
pub fn solve_variance_l1(
    loss: &VarianceLoss,
    coef_weights: &[f64],
    cfg: &SolverConfig,
    init: &[f64],
) -> Result<SolveOutcome> {
    cfg.validate()?;
    let (n, p) = (loss.n(), loss.p());
    check_weights("coef_weights", coef_weights, p)?;
    if init.len() != p {
        return Err(Error::DimensionMismatch(format!("init has length {} but p = {p}", init.len())));
    }
    let inv_n = 1.0 / n as f64;
    let thresh: Vec<f64> = coef_weights.iter().map(|c| 4.0 * c).collect();

    let mut theta = init.to_vec();
    let lin = loss.x.mul_vec(&theta);
    // u_i = e_i^2 exp(-x_i't)
    let mut u: Vec<f64> = lin.iter().zip(&loss.sq_resid).map(|(l, e)| e * (-l).exp()).collect();
    let pen = |t: &[f64]| t.iter().zip(&thresh).map(|(a, c)| c * a.abs()).sum::<f64>();
    let mut obj = refresh(loss, &theta, &u) + pen(&theta);
    if !obj.is_finite() {
        return Err(Error::InvalidArgument("variance objective is not finite at the initial point".into()));
    }

    let g0 = loss.gradient(&vec![0.0; p]);
    let kkt_tol = cfg.kkt_tol() * g0.iter().fold(1.0f64, |m, v| m.max(v.abs()));

    let mut u_new = vec![0.0; n];
    let mut active: Vec<usize> = Vec::new();
    let all: Vec<usize> = (0..p).collect();
    let mut verify = false;
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < cfg.max_inner_iters {
        let full = sweeps < FULL_CYCLES_BEFORE_ACTIVE_SET || verify || active.is_empty();
        sweeps += 1;
        let idx: &[usize] = if full { &all } else { &active };
        let obj_before = obj;
        let mut kkt = 0.0f64;

        for &j in idx {
            let col = loss.x.col(j);
            let mut s_xu = 0.0;
            let mut s_xxu = 0.0;
            for i in 0..n {
                let xu = col[i] * u[i];
                s_xu += xu;
                s_xxu += col[i] * xu;
            }
            let g = loss.col_means[j] - s_xu * inv_n;
            let h = (s_xxu * inv_n).max(1e-12);
            let tj = theta[j];
            let c = thresh[j];
            let resid = if tj == 0.0 {
                (g.abs() - c).max(0.0)
            } else {
                (g + c * tj.signum()).abs()
            };
            kkt = kkt.max(resid);
            if tj == 0.0 && g.abs() <= c {
                continue;
            }
            let target = soft_threshold(tj - g / h, c / h);
            let delta = target - tj;
            if delta == 0.0 {
                continue;
            }
            // Step halving on the exact coordinate objective.
            let mut step = delta;
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                let mut s_u = 0.0;
                for i in 0..n {
                    u_new[i] = u[i] * (-step * col[i]).exp();
                    s_u += u_new[i] - u[i];
                }
                let change = (step * loss.col_means[j] + s_u * inv_n) + c * ((tj + step).abs() - tj.abs());
                if change <= 0.0 && change.is_finite() {
                    theta[j] = tj + step;
                    std::mem::swap(&mut u, &mut u_new);
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                continue;
            }
        }

        obj = refresh(loss, &theta, &u) + pen(&theta);

        let rel = (obj_before - obj).abs() / obj.abs().max(1.0);
        if full {
            if rel <= cfg.inner_tol && kkt <= kkt_tol {
                converged = true;
                break;
            }
            verify = false;
            active = (0..p).filter(|&j| theta[j] != 0.0).collect();
        } else if rel <= cfg.inner_tol {
            verify = true;
        }
    }

    Ok(SolveOutcome {
        coef: theta,
        objective: obj,
        iterations: sweeps,
        converged,
    })
}

/// Smooth objective from the current `theta` and cached `u`.
fn refresh(loss: &VarianceLoss, theta: &[f64], u: &[f64]) -> f64 {
    let lin_mean: f64 = theta.iter().zip(&loss.col_means).map(|(t, m)| t * m).sum();
    lin_mean + u.iter().sum::<f64>() / loss.n() as f64
}
