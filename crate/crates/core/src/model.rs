//! The heteroscedastic linear model `y = x'beta + exp(x'theta / 2) * eps`.
//!
//! Intercepts are never stored in the design. When a dataset is flagged
//! with a mean (or variance) intercept, the corresponding coefficient
//! vector carries one extra leading entry that multiplies an implicit
//! column of ones.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ColMatrix;

/// Bound applied to `x'theta` before exponentiation.
pub const LINPRED_CLIP: f64 = 30.0;

#[inline]
pub(crate) fn clip_linpred(v: f64) -> f64 {
    v.clamp(-LINPRED_CLIP, LINPRED_CLIP)
}

/// A regression instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    mean_intercept: bool,
    var_intercept: bool,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, mean_intercept: bool, var_intercept: bool) -> Result<Self> {
        let (n, p) = x.dim();
        if n != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "x has {n} rows but y has length {}",
                y.len()
            )));
        }
        if n == 0 || p == 0 {
            return Err(Error::InvalidArgument(format!("empty design ({n} x {p})")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("x"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("y"));
        }
        Ok(Self {
            x,
            y,
            mean_intercept,
            var_intercept,
        })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn into_parts(self) -> (Array2<f64>, Array1<f64>) {
        (self.x, self.y)
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn mean_intercept(&self) -> bool {
        self.mean_intercept
    }

    pub fn var_intercept(&self) -> bool {
        self.var_intercept
    }

    /// Length of the mean coefficient vector (intercept included).
    pub fn beta_len(&self) -> usize {
        self.p() + usize::from(self.mean_intercept)
    }

    pub fn theta_len(&self) -> usize {
        self.p() + usize::from(self.var_intercept)
    }

    pub fn mean_design(&self) -> ColMatrix {
        ColMatrix::with_leading_ones(self.x.view(), self.mean_intercept)
    }

    pub fn var_design(&self) -> ColMatrix {
        ColMatrix::with_leading_ones(self.x.view(), self.var_intercept)
    }

    /// Rows `idx` of this dataset, same intercept flags.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), idx),
            y: self.y.select(Axis(0), idx),
            mean_intercept: self.mean_intercept,
            var_intercept: self.var_intercept,
        }
    }

    /// Centers and scales every column to unit sample variance. Constant
    /// columns are centered only.
    pub fn standardized(&self) -> Self {
        let mut x = self.x.clone();
        for mut col in x.columns_mut() {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            col.mapv_inplace(|v| if sd > 0.0 { (v - mean) / sd } else { v - mean });
        }
        Self { x, ..self.clone() }
    }
}

/// Mean and log-variance coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: Array1<f64>,
    pub theta: Array1<f64>,
    pub mean_intercept: bool,
    pub var_intercept: bool,
}

impl ModelParams {
    pub fn new(beta: Array1<f64>, theta: Array1<f64>, mean_intercept: bool, var_intercept: bool) -> Result<Self> {
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("beta"));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("theta"));
        }
        Ok(Self {
            beta,
            theta,
            mean_intercept,
            var_intercept,
        })
    }

    pub fn zeros(d: &Dataset) -> Self {
        Self {
            beta: Array1::zeros(d.beta_len()),
            theta: Array1::zeros(d.theta_len()),
            mean_intercept: d.mean_intercept(),
            var_intercept: d.var_intercept(),
        }
    }

    /// Indices of non-zero entries of `beta` (intercept included, at index 0).
    pub fn beta_support(&self) -> Vec<usize> {
        support(self.beta.as_slice().unwrap_or(&self.beta.to_vec()))
    }

    pub fn theta_support(&self) -> Vec<usize> {
        support(self.theta.as_slice().unwrap_or(&self.theta.to_vec()))
    }

    /// Mean coefficients without the intercept.
    pub fn beta_slopes(&self) -> Array1<f64> {
        self.beta.slice(ndarray::s![usize::from(self.mean_intercept)..]).to_owned()
    }

    pub fn theta_slopes(&self) -> Array1<f64> {
        self.theta.slice(ndarray::s![usize::from(self.var_intercept)..]).to_owned()
    }

    /// `|supp(beta)| + |supp(theta)|`, intercepts counted when non-zero.
    pub fn df(&self) -> usize {
        self.beta_support().len() + self.theta_support().len()
    }

    fn check(&self, d: &Dataset) -> Result<()> {
        if self.beta.len() != d.beta_len() || self.mean_intercept != d.mean_intercept() {
            return Err(Error::DimensionMismatch(format!(
                "beta has length {} but the dataset expects {}",
                self.beta.len(),
                d.beta_len()
            )));
        }
        if self.theta.len() != d.theta_len() || self.var_intercept != d.var_intercept() {
            return Err(Error::DimensionMismatch(format!(
                "theta has length {} but the dataset expects {}",
                self.theta.len(),
                d.theta_len()
            )));
        }
        Ok(())
    }
}

pub(crate) fn support(v: &[f64]) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, &x)| x != 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// `x_i' coef` for every row, with `coef[0]` as intercept when requested.
pub fn linear_predictor(x: ArrayView2<'_, f64>, intercept: bool, coef: &Array1<f64>) -> Result<Array1<f64>> {
    let expected = x.ncols() + usize::from(intercept);
    if coef.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "coefficient vector has length {} but {expected} is required",
            coef.len()
        )));
    }
    if intercept {
        let slopes = coef.slice(ndarray::s![1..]);
        Ok(x.dot(&slopes) + coef[0])
    } else {
        Ok(x.dot(coef))
    }
}

pub fn predict_mean(d: &Dataset, p: &ModelParams) -> Result<Array1<f64>> {
    p.check(d)?;
    linear_predictor(d.x().view(), d.mean_intercept(), &p.beta)
}

/// `sigma_i = exp(clip(x_i'theta) / 2)`.
pub fn variance_scale(d: &Dataset, p: &ModelParams) -> Result<Array1<f64>> {
    p.check(d)?;
    let lin = linear_predictor(d.x().view(), d.var_intercept(), &p.theta)?;
    Ok(lin.mapv(|v| (clip_linpred(v) / 2.0).exp()))
}

pub fn residuals(d: &Dataset, p: &ModelParams) -> Result<Array1<f64>> {
    Ok(d.y() - &predict_mean(d, p)?)
}

/// Per-observation loss `x'theta + (y - x'beta)^2 exp(-x'theta)` (constants dropped).
pub fn pointwise_nll(lin_theta: f64, resid: f64) -> f64 {
    let l = clip_linpred(lin_theta);
    l + resid * resid * (-l).exp()
}

/// `sum_i [x_i'theta + (y_i - x_i'beta)^2 exp(-x_i'theta)]`, with `x'theta`
/// clipped to `[-30, 30]`.
pub fn neg_log_likelihood(d: &Dataset, p: &ModelParams) -> Result<f64> {
    let r = residuals(d, p)?;
    let lin = linear_predictor(d.x().view(), d.var_intercept(), &p.theta)?;
    Ok(lin.iter().zip(r.iter()).map(|(&l, &ri)| pointwise_nll(l, ri)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn params(beta: Array1<f64>, theta: Array1<f64>) -> ModelParams {
        ModelParams::new(beta, theta, false, false).unwrap()
    }

    #[test]
    fn dataset_validation() {
        assert!(matches!(
            Dataset::new(array![[1.0], [2.0]], array![1.0], false, false),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            Dataset::new(array![[f64::NAN]], array![1.0], false, false),
            Err(Error::NonFinite("x"))
        ));
        assert!(Dataset::new(Array2::zeros((0, 2)), Array1::zeros(0), false, false).is_err());
        let d = Dataset::new(array![[1.0]], array![1.0], true, true).unwrap();
        assert_eq!((d.beta_len(), d.theta_len()), (2, 2));
    }

    #[test]
    fn predict_mean_examples() {
        let d = Dataset::new(array![[1.0], [2.0]], array![0.0, 0.0], false, false).unwrap();
        assert_eq!(predict_mean(&d, &params(array![2.0], array![0.0])).unwrap(), array![2.0, 4.0]);
        assert_eq!(predict_mean(&d, &params(array![0.0], array![0.0])).unwrap(), array![0.0, 0.0]);
        let d = Dataset::new(array![[1.0, 1.0]], array![0.0], false, false).unwrap();
        assert_eq!(predict_mean(&d, &params(array![1.0, -1.0], array![0.0, 0.0])).unwrap(), array![0.0]);
        let bad = params(array![1.0], array![0.0, 0.0]);
        assert!(matches!(predict_mean(&d, &bad), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn intercept_is_leading_coefficient() {
        let d = Dataset::new(array![[1.0], [2.0]], array![0.0, 0.0], true, false).unwrap();
        let p = ModelParams::new(array![1.0, 2.0], array![0.0], true, false).unwrap();
        assert_eq!(predict_mean(&d, &p).unwrap(), array![3.0, 5.0]);
    }

    #[test]
    fn variance_scale_examples() {
        let d = Dataset::new(array![[2.0]], array![0.0], false, false).unwrap();
        assert_eq!(variance_scale(&d, &params(array![0.0], array![0.0])).unwrap()[0], 1.0);
        let s = variance_scale(&d, &params(array![0.0], array![1.0])).unwrap()[0];
        assert!((s - std::f64::consts::E).abs() < 1e-12);
        let d = Dataset::new(array![[100.0]], array![0.0], false, false).unwrap();
        let s = variance_scale(&d, &params(array![0.0], array![1.0])).unwrap()[0];
        assert_eq!(s, 15f64.exp());
    }

    #[test]
    fn residual_examples() {
        let d = Dataset::new(array![[1.0], [2.0]], array![1.0, 2.0], false, false).unwrap();
        assert_eq!(residuals(&d, &params(array![1.0], array![0.0])).unwrap(), array![0.0, 0.0]);
        let d = Dataset::new(array![[1.0]], array![3.0], false, false).unwrap();
        assert_eq!(residuals(&d, &params(array![1.0], array![0.0])).unwrap(), array![2.0]);
        let d = Dataset::new(array![[1.0], [-1.0]], array![0.0, 0.0], false, false).unwrap();
        assert_eq!(residuals(&d, &params(array![1.0], array![0.0])).unwrap(), array![-1.0, 1.0]);
    }

    #[test]
    fn nll_examples() {
        // x'theta = 0, residual 1
        let d = Dataset::new(array![[1.0]], array![1.0], false, false).unwrap();
        assert_eq!(neg_log_likelihood(&d, &params(array![0.0], array![0.0])).unwrap(), 1.0);
        assert_eq!(neg_log_likelihood(&d, &params(array![1.0], array![0.0])).unwrap(), 0.0);
        // x'theta = (log 2, 0), residuals (sqrt 2, 1)
        let d = Dataset::new(array![[1.0], [0.0]], array![2f64.sqrt(), 1.0], false, false).unwrap();
        let v = neg_log_likelihood(&d, &params(array![0.0], array![2f64.ln()])).unwrap();
        assert!((v - (2f64.ln() + 2.0)).abs() < 1e-12);
        assert!((v - 2.6931).abs() < 1e-4);
    }

    fn small_instance() -> impl Strategy<Value = (Array2<f64>, Array1<f64>)> {
        (1usize..6, 1usize..4).prop_flat_map(|(n, p)| {
            (
                proptest::collection::vec(-3.0..3.0f64, n * p)
                    .prop_map(move |v| Array2::from_shape_vec((n, p), v).unwrap()),
                proptest::collection::vec(-3.0..3.0f64, n).prop_map(Array1::from),
            )
        })
    }

    proptest! {
        #[test]
        fn predict_mean_is_linear((x, y) in small_instance(), s in -2.0..2.0f64) {
            let p = x.ncols();
            let d = Dataset::new(x, y, false, false).unwrap();
            let b1 = Array1::from_shape_fn(p, |j| s * (j as f64 + 1.0));
            let b2 = Array1::from_shape_fn(p, |j| 1.0 - j as f64);
            let th = Array1::zeros(p);
            let lhs = predict_mean(&d, &params(&b1 + &b2, th.clone())).unwrap();
            let rhs = predict_mean(&d, &params(b1, th.clone())).unwrap()
                + predict_mean(&d, &params(b2, th)).unwrap();
            for (a, b) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn variance_scale_positive((x, y) in small_instance(), t in -20.0..20.0f64) {
            let p = x.ncols();
            let d = Dataset::new(x, y, false, false).unwrap();
            let s = variance_scale(&d, &params(Array1::zeros(p), Array1::from_elem(p, t))).unwrap();
            prop_assert!(s.iter().all(|&v| v > 0.0 && v.is_finite()));
        }

        #[test]
        fn nll_at_zero_theta_is_rss((x, y) in small_instance()) {
            let p = x.ncols();
            let d = Dataset::new(x, y, false, false).unwrap();
            let pr = params(Array1::from_elem(p, 0.5), Array1::zeros(p));
            let rss: f64 = residuals(&d, &pr).unwrap().iter().map(|r| r * r).sum();
            prop_assert!((neg_log_likelihood(&d, &pr).unwrap() - rss).abs() < 1e-9 * (1.0 + rss));
        }

        #[test]
        fn nll_convex_in_theta(
            x in proptest::collection::vec(-1.5..1.5f64, 4 * 3),
            y in proptest::collection::vec(-2.0..2.0f64, 4),
            t1 in proptest::collection::vec(-2.0..2.0f64, 3),
            t2 in proptest::collection::vec(-2.0..2.0f64, 3),
        ) {
            let d = Dataset::new(Array2::from_shape_vec((4, 3), x).unwrap(), Array1::from(y), false, false).unwrap();
            let beta = Array1::from(vec![0.3, -0.2, 0.1]);
            let (t1, t2) = (Array1::from(t1), Array1::from(t2));
            let mid = (&t1 + &t2) / 2.0;
            let f = |t: Array1<f64>| neg_log_likelihood(&d, &params(beta.clone(), t)).unwrap();
            let (a, b, m) = (f(t1), f(t2), f(mid));
            prop_assert!(m <= (a + b) / 2.0 + 1e-9 * (1.0 + a.abs() + b.abs()));
        }
    }
}
