//! Data generators for the two simulation designs.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::rng::{rng_from_seed, SimRng};
use crate::error::{Error, Result};
use crate::model::{linear_predictor, predict_mean, Dataset, ModelParams};

pub const EXAMPLE2_P: usize = 600;
const EXAMPLE2_AR: f64 = 0.5;
const EXAMPLE2_BETA0: f64 = 2.0;
const EXAMPLE2_THETA0: f64 = 1.0;
const EXAMPLE2_BETA: [f64; 12] = [3.0, 3.0, 3.0, 1.5, 1.5, 1.5, 0.0, 0.0, 0.0, 2.0, 2.0, 2.0];
const EXAMPLE2_THETA: [f64; 15] = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.75, 0.75, 0.75];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Covariance {
    /// First three covariates equicorrelated with `rho`, the rest iid N(0,1).
    EquicorrelatedFirstThree { rho: f64 },
    /// `cov(X_i, X_j) = rho^|i-j|`.
    Ar1 { rho: f64 },
}

/// Generating parameters. `theta_star` is on the model's scale, i.e.
/// `sigma = exp(x'theta_star / 2)`; intercepts lead when flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub beta_star: Array1<f64>,
    pub theta_star: Array1<f64>,
    pub covariance: Covariance,
    pub mean_intercept: bool,
    pub var_intercept: bool,
}

impl TrueModel {
    pub fn beta_slopes(&self) -> Array1<f64> {
        self.beta_star.slice(ndarray::s![usize::from(self.mean_intercept)..]).to_owned()
    }

    pub fn theta_slopes(&self) -> Array1<f64> {
        self.theta_star.slice(ndarray::s![usize::from(self.var_intercept)..]).to_owned()
    }
}

/// `log sigma^2 = X_1 + X_2 + X_3`, zero mean, `(X_1, X_2, X_3)` equicorrelated.
/// Generated without intercepts.
pub fn generate_example1(n: usize, p: usize, rho: f64, seed: u64) -> Result<(Dataset, TrueModel)> {
    if p < 3 {
        return Err(Error::InvalidArgument(format!("example 1 needs p >= 3, got {p}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho must lie in [0, 1), got {rho}")));
    }
    let mut theta = Array1::zeros(p);
    theta.slice_mut(ndarray::s![..3]).fill(1.0);
    let truth = TrueModel {
        beta_star: Array1::zeros(p),
        theta_star: theta,
        covariance: Covariance::EquicorrelatedFirstThree { rho },
        mean_intercept: false,
        var_intercept: false,
    };
    let d = generate_from(n, &truth, seed)?;
    Ok((d, truth))
}

/// Draws `n` rows from the heteroscedastic model described by `truth`.
pub fn generate_from(n: usize, truth: &TrueModel, seed: u64) -> Result<Dataset> {
    match truth.covariance {
        Covariance::Ar1 { .. } => generate_ar1(n, truth, seed),
        Covariance::EquicorrelatedFirstThree { rho } => {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::InvalidArgument(format!("rho must lie in [0, 1), got {rho}")));
            }
            let p = check_truth(n, truth)?;
            if p < 3 {
                return Err(Error::InvalidArgument(format!("an equicorrelated block needs p >= 3, got {p}")));
            }
            let l = equicorrelation_cholesky(rho);
            let mut rng = rng_from_seed(seed);
            let mut x = Array2::<f64>::zeros((n, p));
            for mut row in x.rows_mut() {
                let z: [f64; 3] = [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                for a in 0..3 {
                    row[a] = (0..=a).map(|b| l[a][b] * z[b]).sum();
                }
                for v in row.iter_mut().skip(3) {
                    *v = rng.sample(StandardNormal);
                }
            }
            respond(x, truth, &mut rng)
        }
    }
}

/// Validates `truth` against `n` and returns `p`.
fn check_truth(n: usize, truth: &TrueModel) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let p = truth.beta_star.len().saturating_sub(usize::from(truth.mean_intercept));
    if p == 0 || truth.theta_star.len() != p + usize::from(truth.var_intercept) {
        return Err(Error::DimensionMismatch("beta_star and theta_star disagree on p".into()));
    }
    if truth.beta_star.iter().chain(truth.theta_star.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("true coefficients"));
    }
    Ok(p)
}

/// Draws the responses for design `x` (noise after the covariates).
fn respond(x: Array2<f64>, truth: &TrueModel, rng: &mut SimRng) -> Result<Dataset> {
    let n = x.nrows();
    let d0 = Dataset::new(x, Array1::zeros(n), truth.mean_intercept, truth.var_intercept)?;
    let params = ModelParams::new(
        truth.beta_star.clone(),
        truth.theta_star.clone(),
        truth.mean_intercept,
        truth.var_intercept,
    )?;
    let mean = predict_mean(&d0, &params)?;
    let lin = linear_predictor(d0.x().view(), truth.var_intercept, &truth.theta_star)?;
    let y = Array1::from_shape_fn(n, |i| {
        let eps: f64 = rng.sample(StandardNormal);
        mean[i] + (lin[i] / 2.0).exp() * eps
    });
    let (x, _) = d0.into_parts();
    Dataset::new(x, y, truth.mean_intercept, truth.var_intercept)
}

/// Lower Cholesky factor of the 3x3 matrix with unit diagonal and `rho` off it.
fn equicorrelation_cholesky(rho: f64) -> [[f64; 3]; 3] {
    let l11 = 1.0;
    let l21 = rho;
    let l22 = (1.0 - rho * rho).sqrt();
    let l31 = rho;
    let l32 = (rho - l31 * l21) / l22;
    let l33 = (1.0 - l31 * l31 - l32 * l32).sqrt();
    [[l11, 0.0, 0.0], [l21, l22, 0.0], [l31, l32, l33]]
}

/// `Y = 2 + X'beta + sigma(X) eps` with `p = 600` AR(1)(0.5) covariates,
/// `theta_star = (1, gamma)` and `sigma = exp(x'theta_star / 2)`.
pub fn generate_example2(n: usize, seed: u64) -> Result<(Dataset, TrueModel)> {
    let mut beta = Array1::zeros(EXAMPLE2_P + 1);
    beta[0] = EXAMPLE2_BETA0;
    for (j, b) in EXAMPLE2_BETA.iter().enumerate() {
        beta[j + 1] = *b;
    }
    let mut theta = Array1::zeros(EXAMPLE2_P + 1);
    theta[0] = EXAMPLE2_THETA0;
    for (j, t) in EXAMPLE2_THETA.iter().enumerate() {
        theta[j + 1] = *t;
    }
    let truth = TrueModel {
        beta_star: beta,
        theta_star: theta,
        covariance: Covariance::Ar1 { rho: EXAMPLE2_AR },
        mean_intercept: true,
        var_intercept: true,
    };
    let d = generate_ar1(n, &truth, seed)?;
    Ok((d, truth))
}

/// Draws `n` rows from the heteroscedastic model described by `truth`, with
/// AR(1) covariates generated recursively with unit marginal variance.
pub fn generate_ar1(n: usize, truth: &TrueModel, seed: u64) -> Result<Dataset> {
    let rho = match truth.covariance {
        Covariance::Ar1 { rho } => rho,
        Covariance::EquicorrelatedFirstThree { .. } => {
            return Err(Error::InvalidArgument("generate_ar1 needs an AR(1) covariance".into()))
        }
    };
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!("AR(1) coefficient must lie in (-1, 1), got {rho}")));
    }
    let p = check_truth(n, truth)?;
    let innov = (1.0 - rho * rho).sqrt();
    let mut rng = rng_from_seed(seed);
    let mut x = Array2::<f64>::zeros((n, p));
    for mut row in x.rows_mut() {
        let mut prev: f64 = rng.sample(StandardNormal);
        row[0] = prev;
        for v in row.iter_mut().skip(1) {
            let z: f64 = rng.sample(StandardNormal);
            prev = rho * prev + innov * z;
            *v = prev;
        }
    }
    respond(x, truth, &mut rng)
}
