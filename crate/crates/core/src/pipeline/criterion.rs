use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{neg_log_likelihood, Dataset, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
}

impl Criterion {
    /// Complexity penalty for `df` parameters on `n` observations.
    pub fn complexity(self, df: usize, n: usize) -> f64 {
        match self {
            Criterion::Aic => 2.0 * df as f64,
            Criterion::Bic => df as f64 * (n as f64).ln(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Criterion::Aic => "AIC",
            Criterion::Bic => "BIC",
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// `sum_i l(y_i, x_i; beta, theta) + 2 df` (AIC) or `+ df log n` (BIC), with
/// `df = |supp beta| + |supp theta|` counting intercepts.
pub fn information_criterion(d: &Dataset, p: &ModelParams, kind: Criterion) -> Result<f64> {
    let nll = neg_log_likelihood(d, p)?;
    Ok(nll + kind.complexity(p.df(), d.n()))
}

/// Index of the best candidate `(criterion, df)` in grid order (descending
/// lambda). Ties go to the smaller df, then to the earlier (larger) lambda.
pub(crate) fn select_best(cands: impl IntoIterator<Item = (f64, usize)>) -> Option<usize> {
    let mut best: Option<(usize, f64, usize)> = None;
    for (i, (crit, df)) in cands.into_iter().enumerate() {
        if !crit.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, bc, bdf)) => crit < bc || (crit == bc && df < bdf),
        };
        if better {
            best = Some((i, crit, df));
        }
    }
    best.map(|b| b.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn formula_examples() {
        // n = 1, nll = 1, df = 2
        let d = Dataset::new(array![[1.0]], array![1.0], false, true).unwrap();
        let p = ModelParams::new(array![0.0], array![0.0, 0.0], false, true).unwrap();
        assert_eq!(information_criterion(&d, &p, Criterion::Aic).unwrap(), 1.0);
        let p = ModelParams::new(array![1e-300], array![1e-300, 0.0], false, true).unwrap();
        assert_eq!(p.df(), 2);
        assert!((information_criterion(&d, &p, Criterion::Aic).unwrap() - 5.0).abs() < 1e-12);
        assert!((information_criterion(&d, &p, Criterion::Bic).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn df_zero_is_plain_nll() {
        let d = Dataset::new(array![[1.0], [2.0]], array![1.0, -1.0], false, false).unwrap();
        let p = ModelParams::zeros(&d);
        let nll = neg_log_likelihood(&d, &p).unwrap();
        assert_eq!(information_criterion(&d, &p, Criterion::Bic).unwrap(), nll);
        assert_eq!(information_criterion(&d, &p, Criterion::Aic).unwrap(), nll);
    }

    #[test]
    fn selection_tie_breaks() {
        let nll = 10.0;
        let n = 50;
        let c = |df| nll + Criterion::Bic.complexity(df, n);
        assert_eq!(select_best([(c(5), 5), (c(3), 3)]), Some(1));
        assert_eq!(select_best([(1.0, 4), (1.0, 2), (1.0, 2)]), Some(1));
        assert_eq!(select_best([(1.0, 2), (1.0, 2)]), Some(0));
        assert_eq!(select_best([(f64::NAN, 0)]), None);
    }
}
