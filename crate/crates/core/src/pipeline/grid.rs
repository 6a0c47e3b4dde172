use serde::{Deserialize, Serialize};

use super::criterion::Criterion;
use crate::error::{Error, Result};

/// How `(lambda_S, lambda_T)` is searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    /// Tune lambda_S, then lambda_T, then lambda_S again, each with the
    /// other stage's output held fixed.
    Stagewise,
    /// Evaluate the criterion on every `(lambda_S, lambda_T)` pair.
    Product,
}

/// Candidate tuning parameters.
///
/// Explicit grids must be strictly positive and strictly descending. When a
/// grid is left as `None`, each stage builds `n_lambda` log-spaced values
/// from its own `lambda_max` (the smallest lambda with an all-zero penalized
/// solution) down to `min_ratio * lambda_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lambda_s_grid: Option<Vec<f64>>,
    pub lambda_t_grid: Option<Vec<f64>>,
    pub n_lambda: usize,
    pub min_ratio: f64,
    pub criterion: Criterion,
    pub search: SearchMode,
    /// A path stops once the penalized support exceeds this size. `None`
    /// means `n / 2`.
    pub max_support: Option<usize>,
}

impl GridSpec {
    pub fn new(criterion: Criterion) -> Self {
        Self {
            lambda_s_grid: None,
            lambda_t_grid: None,
            n_lambda: 30,
            min_ratio: 0.01,
            criterion,
            search: SearchMode::Stagewise,
            max_support: None,
        }
    }

    pub fn with_grids(criterion: Criterion, lambda_s: Vec<f64>, lambda_t: Vec<f64>) -> Result<Self> {
        let g = Self {
            lambda_s_grid: Some(lambda_s),
            lambda_t_grid: Some(lambda_t),
            ..Self::new(criterion)
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_lambda == 0 {
            return Err(Error::InvalidArgument("n_lambda must be >= 1".into()));
        }
        if !(self.min_ratio > 0.0 && self.min_ratio <= 1.0) {
            return Err(Error::InvalidArgument("min_ratio must lie in (0, 1]".into()));
        }
        for g in [&self.lambda_s_grid, &self.lambda_t_grid].into_iter().flatten() {
            check_descending(g)?;
        }
        Ok(())
    }

    pub(crate) fn support_cap(&self, n: usize) -> usize {
        self.max_support.unwrap_or((n / 2).max(1))
    }

    pub(crate) fn resolve(&self, explicit: Option<&Vec<f64>>, lambda_max: f64) -> Vec<f64> {
        match explicit {
            Some(g) => g.clone(),
            None => log_grid(lambda_max, self.n_lambda, self.min_ratio),
        }
    }
}

fn check_descending(g: &[f64]) -> Result<()> {
    if g.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    if g.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidArgument("lambda grid values must be finite and > 0".into()));
    }
    if g.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("lambda grid must be strictly descending".into()));
    }
    Ok(())
}

/// `len` log-spaced values from `lambda_max` down to `ratio * lambda_max`.
pub fn log_grid(lambda_max: f64, len: usize, ratio: f64) -> Vec<f64> {
    let top = if lambda_max > 0.0 && lambda_max.is_finite() {
        lambda_max
    } else {
        f64::MIN_POSITIVE.sqrt()
    };
    if len == 1 {
        return vec![top];
    }
    let step = ratio.ln() / (len - 1) as f64;
    (0..len).map(|k| top * (step * k as f64).exp()).collect()
}
