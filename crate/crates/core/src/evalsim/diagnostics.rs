use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

/// Box-plot summary of the studentized residuals in one fitted-value bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    /// Half-open range `(lower, upper]` of fitted values; infinite at the ends.
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Sample variance (`n - 1` denominator).
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTest {
    /// Larger over smaller sample variance.
    pub statistic: f64,
    pub df_num: usize,
    pub df_den: usize,
    /// Two-sided: `min(1, 2 (1 - F_cdf(statistic)))`.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub bin_a: usize,
    pub bin_b: usize,
    pub test: FTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Bins with at least two points, in fitted-value order.
    pub bins: Vec<BinSummary>,
    /// F tests for every pair of retained bins (indices into `bins`).
    pub pairs: Vec<PairTest>,
    pub warnings: Vec<String>,
}

/// Sample variance with the `n - 1` denominator.
pub fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

/// F test of equal variances between two samples.
pub fn f_test(a: &[f64], b: &[f64]) -> Result<FTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument("each sample needs at least 2 values".into()));
    }
    let (va, vb) = (sample_variance(a), sample_variance(b));
    let ((big, nb), (small, ns)) = if va >= vb { ((va, a.len()), (vb, b.len())) } else { ((vb, b.len()), (va, a.len())) };
    f_test_from_variances(big, nb - 1, small, ns - 1)
}

/// F test from two sample variances (larger first) and their degrees of freedom.
pub fn f_test_from_variances(larger: f64, df_num: usize, smaller: f64, df_den: usize) -> Result<FTest> {
    if df_num == 0 || df_den == 0 {
        return Err(Error::InvalidArgument("degrees of freedom must be >= 1".into()));
    }
    let statistic = if larger == smaller { 1.0 } else { larger / smaller };
    // Also rejects NaN.
    if statistic.partial_cmp(&1.0).is_none_or(|o| o.is_lt()) {
        return Err(Error::InvalidArgument("variances must be non-negative with the larger first".into()));
    }
    let p_value = if statistic.is_infinite() {
        0.0
    } else if statistic == 1.0 && df_num == df_den {
        // F(d, d) has median exactly 1.
        1.0
    } else {
        let dist = FisherSnedecor::new(df_num as f64, df_den as f64)
            .map_err(|e| Error::InvalidArgument(format!("F distribution: {e}")))?;
        (2.0 * (1.0 - dist.cdf(statistic))).min(1.0)
    };
    Ok(FTest {
        statistic,
        df_num,
        df_den,
        p_value,
    })
}

/// Residuals divided by `scale` when given, otherwise by their root mean square.
pub fn studentize(residuals: &[f64], scale: Option<&[f64]>) -> Result<Vec<f64>> {
    match scale {
        Some(s) => {
            if s.len() != residuals.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} scales for {} residuals",
                    s.len(),
                    residuals.len()
                )));
            }
            if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidArgument("scales must be positive and finite".into()));
            }
            Ok(residuals.iter().zip(s).map(|(r, s)| r / s).collect())
        }
        None => {
            let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
            if !(rms > 0.0 && rms.is_finite()) {
                return Err(Error::InvalidArgument("residuals have zero or non-finite scale".into()));
            }
            Ok(residuals.iter().map(|r| r / rms).collect())
        }
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bins studentized residuals by fitted value at the ascending `breakpoints`
/// (`m` breakpoints give `m + 1` bins), summarizes each bin and F-tests
/// every pair of bins for equal variance. Bins with fewer than two points
/// are dropped with a warning.
pub fn heteroscedasticity_diagnostics(
    fitted: &[f64],
    residuals: &[f64],
    scale: Option<&[f64]>,
    breakpoints: &[f64],
) -> Result<Diagnostics> {
    if fitted.len() != residuals.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} fitted values for {} residuals",
            fitted.len(),
            residuals.len()
        )));
    }
    if fitted.iter().chain(residuals).chain(breakpoints).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("diagnostics input"));
    }
    if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("breakpoints must be strictly ascending".into()));
    }
    let stud = studentize(residuals, scale)?;
    let mut edges = Vec::with_capacity(breakpoints.len() + 2);
    edges.push(f64::NEG_INFINITY);
    edges.extend_from_slice(breakpoints);
    edges.push(f64::INFINITY);

    let mut bins = Vec::new();
    let mut members: Vec<Vec<f64>> = Vec::new();
    let mut warnings = Vec::new();
    for w in edges.windows(2) {
        let (lower, upper) = (w[0], w[1]);
        let mut v: Vec<f64> = fitted
            .iter()
            .zip(&stud)
            .filter(|(f, _)| **f > lower && **f <= upper)
            .map(|(_, s)| *s)
            .collect();
        if v.len() < 2 {
            warnings.push(format!("bin ({lower}, {upper}] has {} point(s) and was dropped", v.len()));
            continue;
        }
        v.sort_by(f64::total_cmp);
        bins.push(BinSummary {
            lower,
            upper,
            count: v.len(),
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
            variance: sample_variance(&v),
        });
        members.push(v);
    }
    if bins.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 bins with 2 or more points, got {}",
            bins.len()
        )));
    }
    let mut pairs = Vec::new();
    for a in 0..bins.len() {
        for b in a + 1..bins.len() {
            pairs.push(PairTest {
                bin_a: a,
                bin_b: b,
                test: f_test(&members[a], &members[b])?,
            });
        }
    }
    Ok(Diagnostics { bins, pairs, warnings })
}
