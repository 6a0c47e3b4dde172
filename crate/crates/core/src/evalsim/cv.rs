use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::substream;
use crate::error::{Error, Result};
use crate::model::{linear_predictor, pointwise_nll, Dataset, ModelParams};
use crate::pipeline::{fit_hippo, GridSpec, PipelineConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_test: usize,
    pub mse: Option<f64>,
    pub partial_prediction_score: Option<f64>,
    /// Selected mean slopes (intercept excluded).
    pub mean_support: Option<usize>,
    /// Selected variance slopes (intercept excluded).
    pub var_support: Option<usize>,
    pub homoscedastic_fallback: bool,
    /// Why the fold was skipped, if it was.
    pub skipped: Option<String>,
}

/// Fold averages over the folds that produced a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub mse: f64,
    pub partial_prediction_score: f64,
    pub mean_support: f64,
    pub var_support: f64,
    pub skipped_folds: usize,
    pub folds: Vec<FoldResult>,
}

/// Test indices of each fold: the rows are shuffled with the stream for
/// `seed` and cut into `k` contiguous blocks whose sizes differ by at most
/// one (the first `n % k` blocks get the extra row).
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!("cannot split {n} rows into {k} folds")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut substream(seed, 0));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(perm[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Held-out mean squared error and average negative log-likelihood of
/// `params` on `test`.
pub fn holdout_metrics(test: &Dataset, params: &ModelParams) -> Result<(f64, f64)> {
    let mean = linear_predictor(test.x().view(), params.mean_intercept, &params.beta)?;
    let lin = linear_predictor(test.x().view(), params.var_intercept, &params.theta)?;
    let n = test.n() as f64;
    let (mut sq, mut nll) = (0.0, 0.0);
    for ((y, m), l) in test.y().iter().zip(mean.iter()).zip(lin.iter()) {
        let r = y - m;
        sq += r * r;
        nll += pointwise_nll(*l, r);
    }
    Ok((sq / n, nll / n))
}

/// k-fold cross-validation of the procedure configured by `cfg` (its
/// penalty family picks HIPPO or HHR). Folds run on `jobs` threads (`0`
/// uses the rayon default); the result does not depend on `jobs`. A fold
/// whose fit fails is skipped and flagged; it is an error only if every
/// fold fails.
pub fn kfold_cv(d: &Dataset, k: usize, seed: u64, grid: &GridSpec, cfg: &PipelineConfig, jobs: usize) -> Result<CvReport> {
    grid.validate()?;
    cfg.validate()?;
    let folds = fold_assignment(d.n(), k, seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker threads: {e}")))?;
    let results: Vec<FoldResult> = pool.install(|| {
        folds
            .par_iter()
            .enumerate()
            .map(|(f, test_idx)| run_fold(d, f, test_idx, grid, cfg))
            .collect()
    });

    let ok: Vec<&FoldResult> = results.iter().filter(|r| r.skipped.is_none()).collect();
    if ok.is_empty() {
        let why = results
            .first()
            .and_then(|r| r.skipped.clone())
            .unwrap_or_default();
        return Err(Error::InvalidArgument(format!("every fold failed to fit: {why}")));
    }
    let avg = |f: &dyn Fn(&FoldResult) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64;
    Ok(CvReport {
        k,
        seed,
        mse: avg(&|r| r.mse.unwrap_or(f64::NAN)),
        partial_prediction_score: avg(&|r| r.partial_prediction_score.unwrap_or(f64::NAN)),
        mean_support: avg(&|r| r.mean_support.unwrap_or(0) as f64),
        var_support: avg(&|r| r.var_support.unwrap_or(0) as f64),
        skipped_folds: results.len() - ok.len(),
        folds: results,
    })
}

fn run_fold(d: &Dataset, fold: usize, test_idx: &[usize], grid: &GridSpec, cfg: &PipelineConfig) -> FoldResult {
    let mut in_test = vec![false; d.n()];
    test_idx.iter().for_each(|&i| in_test[i] = true);
    let train_idx: Vec<usize> = (0..d.n()).filter(|&i| !in_test[i]).collect();
    let skipped = |why: String| FoldResult {
        fold,
        n_test: test_idx.len(),
        mse: None,
        partial_prediction_score: None,
        mean_support: None,
        var_support: None,
        homoscedastic_fallback: false,
        skipped: Some(why),
    };
    let (train, test) = (d.subset(&train_idx), d.subset(test_idx));
    let fit = match fit_hippo(&train, grid, cfg) {
        Ok(f) => f,
        Err(e) => return skipped(e.to_string()),
    };
    match holdout_metrics(&test, &fit.params) {
        Ok((mse, pps)) if mse.is_finite() && pps.is_finite() => FoldResult {
            fold,
            n_test: test_idx.len(),
            mse: Some(mse),
            partial_prediction_score: Some(pps),
            mean_support: Some(fit.params.beta_slopes().iter().filter(|&&v| v != 0.0).count()),
            var_support: Some(fit.params.theta_slopes().iter().filter(|&&v| v != 0.0).count()),
            homoscedastic_fallback: fit.homoscedastic_fallback,
            skipped: None,
        },
        Ok(_) => skipped("held-out metrics are not finite".into()),
        Err(e) => skipped(e.to_string()),
    }
}
