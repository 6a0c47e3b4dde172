use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::rng::substream;
use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::model::Dataset;
use crate::penalty::PenaltySpec;
use crate::pipeline::fit_stage1;
use crate::solvers::SolverConfig;

/// Fixed-design check that the unpenalized mean fit on the true support is
/// asymptotically normal under heteroscedastic noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityConfig {
    pub n: usize,
    /// Support size; the design has exactly these `s` columns.
    pub s: usize,
    pub reps: usize,
    /// Variance coefficient on every support column (`0` is homoscedastic).
    pub theta: f64,
    pub seed: u64,
}

impl Default for NormalityConfig {
    fn default() -> Self {
        Self {
            n: 500,
            s: 2,
            reps: 500,
            theta: 0.5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub ks_distance: f64,
    /// Standardized statistics, one per replicate.
    pub statistics: Vec<f64>,
}

/// Kolmogorov-Smirnov distance between the empirical law of `z` and N(0, 1).
pub fn ks_distance_normal(z: &[f64]) -> f64 {
    let norm = Normal::standard();
    let mut v = z.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() as f64;
    v.iter().enumerate().fold(0.0, |d, (i, x)| {
        let f = norm.cdf(*x);
        d.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m)
    })
}

/// Draws a standard normal design once, then per replicate draws
/// `y = X beta + exp(X theta / 2) eps` with `beta = 1`, refits without
/// penalty and records `sqrt(n) a'(beta_hat - beta) / zeta` for
/// `a = 1 / sqrt(s)`. `zeta^2 = a' S^-1 D S^-1 a` with `S = X'X / n` and
/// `D = X' diag(exp(X theta)) X / n`, the sandwich variance of the fit.
pub fn oracle_normality_check(cfg: &NormalityConfig, solver: &SolverConfig) -> Result<NormalityReport> {
    let NormalityConfig { n, s, reps, theta, seed } = *cfg;
    if s == 0 || reps == 0 || n <= s {
        return Err(Error::InvalidArgument(format!("need reps >= 1 and n > s >= 1, got n={n} s={s} reps={reps}")));
    }
    if !theta.is_finite() {
        return Err(Error::NonFinite("theta"));
    }
    let mut rng = substream(seed, 0);
    let x: Array2<f64> = Array2::from_shape_simple_fn((n, s), || StandardNormal.sample(&mut rng));
    let sd: Array1<f64> = x.rows().into_iter().map(|r| (theta * r.sum() / 2.0).exp()).collect();

    let nf = n as f64;
    let gram = x.t().dot(&x) / nf;
    let xd = &x * &sd.mapv(|v| v * v).insert_axis(ndarray::Axis(1));
    let meat = x.t().dot(&xd) / nf;
    let a = Array1::from_elem(s, 1.0 / (s as f64).sqrt());
    let u = cholesky_solve(&gram, &a).ok_or_else(|| Error::InvalidArgument("design is singular".into()))?;
    let zeta = u.dot(&meat.dot(&u)).sqrt();

    let mean = x.sum_axis(ndarray::Axis(1));
    let spec = PenaltySpec::l1(0.0)?;
    let mut statistics = Vec::with_capacity(reps);
    for r in 0..reps {
        let mut rng = substream(seed, r as u64 + 1);
        let y: Array1<f64> = mean
            .iter()
            .zip(&sd)
            .map(|(m, s)| {
                let e: f64 = StandardNormal.sample(&mut rng);
                m + s * e
            })
            .collect();
        let d = Dataset::new(x.clone(), y, false, false)?;
        let beta = fit_stage1(&d, &spec, solver)?;
        let err: f64 = beta.iter().map(|b| b - 1.0).sum::<f64>() / (s as f64).sqrt();
        statistics.push(nf.sqrt() * err / zeta);
    }
    Ok(NormalityReport {
        ks_distance: ks_distance_normal(&statistics),
        statistics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let norm = Normal::standard();
        let z: Vec<f64> = (0..1000).map(|i| norm.inverse_cdf((i as f64 + 0.5) / 1000.0)).collect();
        assert!((ks_distance_normal(&z) - 0.0005).abs() < 1e-9);
        assert!((ks_distance_normal(&[0.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn heteroscedastic_statistic_is_standard_normal() {
        let r = oracle_normality_check(&NormalityConfig::default(), &SolverConfig::default()).unwrap();
        assert_eq!(r.statistics.len(), 500);
        assert!(r.ks_distance < 0.08, "KS {}", r.ks_distance);
    }

    #[test]
    fn homoscedastic_case_reduces_to_ols() {
        let cfg = NormalityConfig { theta: 0.0, reps: 300, n: 200, ..Default::default() };
        let r = oracle_normality_check(&cfg, &SolverConfig::default()).unwrap();
        assert!(r.ks_distance < 0.1, "KS {}", r.ks_distance);
    }

    #[test]
    fn single_replicate_is_bounded() {
        let cfg = NormalityConfig { reps: 1, ..Default::default() };
        let r = oracle_normality_check(&cfg, &SolverConfig::default()).unwrap();
        assert!(r.ks_distance > 0.0 && r.ks_distance <= 1.0);
        assert!(oracle_normality_check(&NormalityConfig { n: 2, ..Default::default() }, &SolverConfig::default()).is_err());
    }
}
