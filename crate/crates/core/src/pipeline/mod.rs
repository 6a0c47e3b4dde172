//! Three-stage penalized pseudolikelihood fitting with AIC/BIC tuning.
//!
//! One sweep fits the mean and then the variance on the squared mean
//! residuals. The first sweep fits the mean by ordinary penalized least
//! squares; every later sweep reweights the mean fit by the previous
//! variance estimate. `n_sweeps = 2` gives the usual three stages followed
//! by a variance refit on the reweighted residuals.

mod criterion;
mod grid;

pub use criterion::{information_criterion, Criterion};
pub use grid::{log_grid, GridSpec, SearchMode};

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ColMatrix;
use crate::model::{clip_linpred, Dataset, ModelParams};
use crate::penalty::{PenaltyFamily, PenaltySpec, DEFAULT_SCAD_A};
use crate::solvers::{lla_solve, LeastSquaresLoss, LlaOutcome, SolverConfig, Subproblem, VarianceLoss};
use criterion::select_best;

/// Observation weights used by the reweighted mean fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlsWeights {
    /// `1 / sigma_i`, the default.
    InverseSd,
    /// `1 / sigma_i^2`
    InverseVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub penalty_family: PenaltyFamily,
    pub scad_a: f64,
    pub n_sweeps: usize,
    pub solver: SolverConfig,
    pub gls_weights: GlsWeights,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::hippo()
    }
}

impl PipelineConfig {
    pub fn hippo() -> Self {
        Self {
            penalty_family: PenaltyFamily::Scad,
            scad_a: DEFAULT_SCAD_A,
            n_sweeps: 2,
            solver: SolverConfig::default(),
            gls_weights: GlsWeights::InverseSd,
        }
    }

    pub fn hhr() -> Self {
        Self {
            penalty_family: PenaltyFamily::L1,
            ..Self::hippo()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sweeps == 0 {
            return Err(Error::InvalidArgument("n_sweeps must be >= 1".into()));
        }
        self.solver.validate()?;
        PenaltySpec::new(self.penalty_family, 0.0, self.scad_a)?;
        Ok(())
    }

    fn spec(&self, lambda: f64) -> Result<PenaltySpec> {
        PenaltySpec::new(self.penalty_family, lambda, self.scad_a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Mean,
    Variance,
    WeightedMean,
}

/// LLA objective trace of a selected stage fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: Stage,
    pub sweep: usize,
    pub lambda: f64,
    pub trace: Vec<f64>,
}

/// Estimates after one mean/variance sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub beta: Array1<f64>,
    pub theta: Array1<f64>,
    pub lambda_s: Option<f64>,
    pub lambda_t: Option<f64>,
    pub criterion_value: f64,
}

/// Inner-solver iterations summed over every fit of each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageIterations {
    pub stage1: usize,
    pub stage2: usize,
    pub stage3: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub penalty_family: PenaltyFamily,
    pub criterion: Criterion,
    /// `None` when the mean was not tuned (known mean).
    pub lambda_s: Option<f64>,
    /// `None` when the variance fit fell back to an intercept-only model.
    pub lambda_t: Option<f64>,
    pub criterion_value: f64,
    pub df: usize,
    pub objective_trace: Vec<StageTrace>,
    pub n_iterations: StageIterations,
    pub sweeps: Vec<SweepRecord>,
    /// Every inner solve and LLA loop on every path converged.
    pub converged: bool,
    pub homoscedastic_fallback: bool,
    /// Largest relative increase of any LLA objective trace on any path.
    pub max_trace_increase: f64,
}

impl FitResult {
    /// Recomputes the information criterion of the stored parameters.
    pub fn recompute_criterion(&self, d: &Dataset) -> Result<f64> {
        information_criterion(d, &self.params, self.criterion)
    }
}

/// Mean-stage fit with unit observation weights at one lambda.
pub fn fit_stage1(d: &Dataset, spec: &PenaltySpec, cfg: &SolverConfig) -> Result<Array1<f64>> {
    let ctx = Ctx::new(d);
    let loss = ctx.unit_loss()?;
    let init = ctx.mean_start(&loss);
    let out = lla_solve(Subproblem::Mean(&loss), &ctx.mean_mask, spec, cfg, &init)?;
    Ok(Array1::from(out.coef))
}

/// Variance-stage fit on the squared residuals of `beta` at one lambda.
pub fn fit_stage2(d: &Dataset, beta: &Array1<f64>, spec: &PenaltySpec, cfg: &SolverConfig) -> Result<Array1<f64>> {
    let ctx = Ctx::new(d);
    let loss = ctx.variance_loss(beta.as_slice().expect("contiguous beta"))?;
    let init = ctx.variance_start(&loss);
    let out = lla_solve(Subproblem::Variance(&loss), &ctx.var_mask, spec, cfg, &init)?;
    Ok(Array1::from(out.coef))
}

/// Reweighted mean fit with weights `1 / sigma_i`, `sigma_i = exp(x_i'theta / 2)`.
pub fn fit_stage3(d: &Dataset, theta: &Array1<f64>, spec: &PenaltySpec, cfg: &SolverConfig) -> Result<Array1<f64>> {
    fit_stage3_with(d, theta, spec, cfg, GlsWeights::InverseSd)
}

pub fn fit_stage3_with(
    d: &Dataset,
    theta: &Array1<f64>,
    spec: &PenaltySpec,
    cfg: &SolverConfig,
    weights: GlsWeights,
) -> Result<Array1<f64>> {
    let ctx = Ctx::new(d);
    let loss = ctx.weighted_loss(theta.as_slice().expect("contiguous theta"), weights)?;
    let init = ctx.mean_start(&loss);
    let out = lla_solve(Subproblem::Mean(&loss), &ctx.mean_mask, spec, cfg, &init)?;
    Ok(Array1::from(out.coef))
}

/// Full procedure with the penalty family given by `cfg`.
pub fn fit_hippo(d: &Dataset, grid: &GridSpec, cfg: &PipelineConfig) -> Result<FitResult> {
    grid.validate()?;
    cfg.validate()?;
    match grid.search {
        SearchMode::Stagewise => Tuner::new(d, grid, cfg).stagewise(),
        SearchMode::Product => Tuner::new(d, grid, cfg).product(),
    }
}

/// Runs [`fit_hippo`] once per criterion in `criteria`. Lambda paths that
/// the criteria have in common are fitted once; every result equals the
/// corresponding single-criterion fit.
pub fn fit_hippo_criteria(
    d: &Dataset,
    grid: &GridSpec,
    cfg: &PipelineConfig,
    criteria: &[Criterion],
) -> Result<Vec<FitResult>> {
    grid.validate()?;
    cfg.validate()?;
    let cache = PathCache::default();
    criteria
        .iter()
        .map(|&criterion| {
            let grid = GridSpec {
                criterion,
                ..grid.clone()
            };
            let t = Tuner::new(d, &grid, cfg).with_cache(&cache);
            match grid.search {
                SearchMode::Stagewise => t.stagewise(),
                SearchMode::Product => t.product(),
            }
        })
        .collect()
}

/// The lasso baseline: the same driver with an L1 penalty.
pub fn fit_hhr(d: &Dataset, grid: &GridSpec, cfg: &PipelineConfig) -> Result<FitResult> {
    let cfg = PipelineConfig {
        penalty_family: PenaltyFamily::L1,
        ..cfg.clone()
    };
    fit_hippo(d, grid, &cfg)
}

/// Tunes only the variance stage with the mean coefficients held at `beta`.
pub fn fit_variance_known_mean(
    d: &Dataset,
    beta: &Array1<f64>,
    grid: &GridSpec,
    cfg: &PipelineConfig,
) -> Result<FitResult> {
    let mut out = fit_variance_known_mean_criteria(d, beta, grid, cfg, &[grid.criterion])?;
    Ok(out.pop().expect("one criterion"))
}

/// [`fit_variance_known_mean`] for several criteria sharing one lambda path.
pub fn fit_variance_known_mean_criteria(
    d: &Dataset,
    beta: &Array1<f64>,
    grid: &GridSpec,
    cfg: &PipelineConfig,
    criteria: &[Criterion],
) -> Result<Vec<FitResult>> {
    grid.validate()?;
    cfg.validate()?;
    let beta = beta.to_vec();
    if beta.len() != d.beta_len() {
        return Err(Error::DimensionMismatch(format!(
            "beta has length {} but the dataset expects {}",
            beta.len(),
            d.beta_len()
        )));
    }
    let cache = PathCache::default();
    criteria
        .iter()
        .map(|&criterion| {
            let grid = GridSpec {
                criterion,
                ..grid.clone()
            };
            let mut t = Tuner::new(d, &grid, cfg).with_cache(&cache);
            let (params, lambda_t, fallback) = match t.tune_variance(&beta, 1, None)? {
                Some((theta, lt)) => (t.params(&beta, &theta), Some(lt), false),
                None => (t.params(&beta, &t.fallback_theta(&beta)), None, true),
            };
            let sweep = t.record(&params, None, lambda_t)?;
            t.finish(params, None, lambda_t, vec![sweep], fallback)
        })
        .collect()
}

/// One fitted path: each lambda with its fit.
type FittedPath = Rc<Vec<(f64, LlaOutcome)>>;

/// Fitted lambda paths keyed by stage, stage input and lambda grid.
#[derive(Default)]
struct PathCache(RefCell<HashMap<Vec<u64>, FittedPath>>);

fn path_key(stage: Stage, input: &[f64], lambdas: &[f64]) -> Vec<u64> {
    let mut key = Vec::with_capacity(input.len() + lambdas.len() + 2);
    key.push(stage as u64);
    key.extend(input.iter().map(|v| v.to_bits()));
    key.push(u64::MAX);
    key.extend(lambdas.iter().map(|v| v.to_bits()));
    key
}

struct Ctx<'a> {
    d: &'a Dataset,
    mean_x: ColMatrix,
    var_x: ColMatrix,
    mean_mask: Vec<bool>,
    var_mask: Vec<bool>,
    y: Vec<f64>,
}

impl<'a> Ctx<'a> {
    fn new(d: &'a Dataset) -> Self {
        let mask = |intercept: bool| {
            let mut m = vec![true; d.p() + usize::from(intercept)];
            if intercept {
                m[0] = false;
            }
            m
        };
        Self {
            d,
            mean_x: d.mean_design(),
            var_x: d.var_design(),
            mean_mask: mask(d.mean_intercept()),
            var_mask: mask(d.var_intercept()),
            y: d.y().to_vec(),
        }
    }

    fn unit_loss(&self) -> Result<LeastSquaresLoss> {
        LeastSquaresLoss::new(self.mean_x.clone(), self.y.clone(), vec![1.0; self.d.n()])
    }

    fn weighted_loss(&self, theta: &[f64], kind: GlsWeights) -> Result<LeastSquaresLoss> {
        if theta.len() != self.var_x.cols() {
            return Err(Error::DimensionMismatch(format!(
                "theta has length {} but the dataset expects {}",
                theta.len(),
                self.var_x.cols()
            )));
        }
        let lin = self.var_x.mul_vec(theta);
        let w = lin
            .iter()
            .map(|&l| {
                let l = clip_linpred(l);
                match kind {
                    GlsWeights::InverseSd => (-l / 2.0).exp(),
                    GlsWeights::InverseVariance => (-l).exp(),
                }
            })
            .collect();
        LeastSquaresLoss::new(self.mean_x.clone(), self.y.clone(), w)
    }

    fn sq_residuals(&self, beta: &[f64]) -> Result<Vec<f64>> {
        if beta.len() != self.mean_x.cols() {
            return Err(Error::DimensionMismatch(format!(
                "beta has length {} but the dataset expects {}",
                beta.len(),
                self.mean_x.cols()
            )));
        }
        let fit = self.mean_x.mul_vec(beta);
        Ok(self.y.iter().zip(fit.iter()).map(|(y, f)| (y - f).powi(2)).collect())
    }

    fn is_degenerate(&self, sq: &[f64]) -> bool {
        let n = sq.len() as f64;
        let ms = sq.iter().sum::<f64>() / n;
        let my = self.y.iter().map(|v| v * v).sum::<f64>() / n;
        ms == 0.0 || ms <= crate::solvers::DEGENERATE_RATIO * my
    }

    fn variance_loss(&self, beta: &[f64]) -> Result<VarianceLoss> {
        let sq = self.sq_residuals(beta)?;
        if self.is_degenerate(&sq) {
            return Err(Error::DegenerateResiduals);
        }
        VarianceLoss::new(self.var_x.clone(), sq)
    }

    /// Solution at `lambda_max`: weighted mean intercept (if any), zero slopes.
    fn mean_start(&self, loss: &LeastSquaresLoss) -> Vec<f64> {
        let mut b = vec![0.0; self.mean_x.cols()];
        if self.d.mean_intercept() {
            let w = loss.obs_weights();
            let sw: f64 = w.iter().sum();
            if sw > 0.0 {
                b[0] = w.iter().zip(&self.y).map(|(w, y)| w * y).sum::<f64>() / sw;
            }
        }
        b
    }

    fn mean_lambda_max(&self, loss: &LeastSquaresLoss) -> f64 {
        let g = loss.gradient(&self.mean_start(loss));
        // |X_j'W r| / n = |grad_j| / 2
        max_penalized(&g, &self.mean_mask) / 2.0 * LAMBDA_MAX_GUARD
    }

    fn variance_start(&self, loss: &VarianceLoss) -> Vec<f64> {
        let mut t = vec![0.0; self.var_x.cols()];
        if self.d.var_intercept() {
            t[0] = intercept_only_log_variance(loss.sq_residuals());
        }
        t
    }

    fn variance_lambda_max(&self, loss: &VarianceLoss) -> f64 {
        let g = loss.gradient(&self.variance_start(loss));
        max_penalized(&g, &self.var_mask) / 4.0 * LAMBDA_MAX_GUARD
    }
}

/// At exactly `lambda_max` rounding can leave a slope of order 1e-17, which
/// would count as a degree of freedom; the top of every path is raised by
/// this factor so that it is the null fit.
const LAMBDA_MAX_GUARD: f64 = 1.0 + 1e-9;

fn max_penalized(g: &[f64], mask: &[bool]) -> f64 {
    g.iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold(0.0f64, |m, (v, _)| m.max(v.abs()))
}

/// `clip(log(mean e^2))`, the variance-intercept MLE.
fn intercept_only_log_variance(sq: &[f64]) -> f64 {
    let m = sq.iter().sum::<f64>() / sq.len() as f64;
    clip_linpred(m.ln())
}

struct Candidate {
    lambda: f64,
    coef: Vec<f64>,
    crit: f64,
    df: usize,
    trace: Vec<f64>,
}

struct Tuner<'a> {
    ctx: Ctx<'a>,
    grid: &'a GridSpec,
    cfg: &'a PipelineConfig,
    cap: usize,
    iters: StageIterations,
    converged: bool,
    max_inc: f64,
    traces: Vec<StageTrace>,
    cache: Option<&'a PathCache>,
}

impl<'a> Tuner<'a> {
    fn new(d: &'a Dataset, grid: &'a GridSpec, cfg: &'a PipelineConfig) -> Self {
        Self {
            ctx: Ctx::new(d),
            grid,
            cfg,
            cap: grid.support_cap(d.n()),
            iters: StageIterations::default(),
            converged: true,
            max_inc: 0.0,
            traces: Vec::new(),
            cache: None,
        }
    }

    fn with_cache(mut self, cache: &'a PathCache) -> Self {
        self.cache = Some(cache);
        self
    }

    fn params(&self, beta: &[f64], theta: &[f64]) -> ModelParams {
        ModelParams {
            beta: Array1::from(beta.to_vec()),
            theta: Array1::from(theta.to_vec()),
            mean_intercept: self.ctx.d.mean_intercept(),
            var_intercept: self.ctx.d.var_intercept(),
        }
    }

    fn criterion(&self, beta: &[f64], theta: &[f64]) -> Result<(f64, usize)> {
        let p = self.params(beta, theta);
        Ok((information_criterion(self.ctx.d, &p, self.grid.criterion)?, p.df()))
    }

    /// Intercept-only variance for the residuals of `beta` (zero without a
    /// variance intercept).
    fn fallback_theta(&self, beta: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; self.ctx.var_x.cols()];
        if self.ctx.d.var_intercept() {
            if let Ok(sq) = self.ctx.sq_residuals(beta) {
                t[0] = intercept_only_log_variance(&sq);
            }
        }
        t
    }

    fn note(&mut self, stage: Stage, out: &LlaOutcome) {
        match stage {
            Stage::Mean => self.iters.stage1 += out.inner_iterations,
            Stage::Variance => self.iters.stage2 += out.inner_iterations,
            Stage::WeightedMean => self.iters.stage3 += out.inner_iterations,
        }
        self.converged &= out.converged;
        self.max_inc = self.max_inc.max(out.max_trace_increase());
    }

    fn over_cap(&self, coef: &[f64], mask: &[bool]) -> bool {
        coef.iter().zip(mask).filter(|(c, &m)| m && **c != 0.0).count() > self.cap
    }

    /// Fits `sub` along `lambdas` with warm starts, stopping once the
    /// penalized support exceeds the cap, and scores each fit. `input` is
    /// the quantity the loss was built from and keys the path cache.
    fn path(
        &mut self,
        sub: Subproblem<'_>,
        stage: Stage,
        input: &[f64],
        lambdas: &[f64],
        init: Vec<f64>,
        mut score: impl FnMut(&Self, &[f64]) -> Result<(f64, usize)>,
    ) -> Result<Vec<Candidate>> {
        let key = self.cache.map(|_| path_key(stage, input, lambdas));
        let cached = match (self.cache, &key) {
            (Some(c), Some(k)) => c.0.borrow().get(k).cloned(),
            _ => None,
        };
        let fits = match cached {
            Some(f) => f,
            None => {
                let f = Rc::new(self.fit_path(sub, stage, lambdas, init)?);
                if let (Some(c), Some(k)) = (self.cache, key) {
                    c.0.borrow_mut().insert(k, Rc::clone(&f));
                }
                f
            }
        };
        let mut out = Vec::with_capacity(fits.len());
        for (lambda, fit) in fits.iter() {
            self.note(stage, fit);
            let (crit, df) = score(self, &fit.coef)?;
            out.push(Candidate {
                lambda: *lambda,
                coef: fit.coef.clone(),
                crit,
                df,
                trace: fit.objective_trace.clone(),
            });
        }
        Ok(out)
    }

    fn fit_path(
        &self,
        sub: Subproblem<'_>,
        stage: Stage,
        lambdas: &[f64],
        init: Vec<f64>,
    ) -> Result<Vec<(f64, LlaOutcome)>> {
        let mask = match stage {
            Stage::Variance => &self.ctx.var_mask,
            _ => &self.ctx.mean_mask,
        };
        let mut start = init;
        let mut out: Vec<(f64, LlaOutcome)> = Vec::with_capacity(lambdas.len());
        for &lambda in lambdas {
            let spec = self.cfg.spec(lambda)?;
            let fit = lla_solve(sub, mask, &spec, &self.cfg.solver, &start)?;
            if !out.is_empty() && self.over_cap(&fit.coef, mask) {
                break;
            }
            start.clone_from(&fit.coef);
            out.push((lambda, fit));
        }
        Ok(out)
    }

    fn pick(&mut self, cands: Vec<Candidate>, stage: Stage, sweep: usize) -> Result<(Vec<f64>, f64)> {
        let best = select_best(cands.iter().map(|c| (c.crit, c.df)))
            .ok_or_else(|| Error::InvalidArgument("no finite criterion value on the lambda path".into()))?;
        let c = cands.into_iter().nth(best).expect("index in range");
        self.traces.push(StageTrace {
            stage,
            sweep,
            lambda: c.lambda,
            trace: c.trace,
        });
        Ok((c.coef, c.lambda))
    }

    fn tune_unit_mean(&mut self) -> Result<(Vec<f64>, f64)> {
        let loss = self.ctx.unit_loss()?;
        let lambdas = self
            .grid
            .resolve(self.grid.lambda_s_grid.as_ref(), self.ctx.mean_lambda_max(&loss));
        let init = self.ctx.mean_start(&loss);
        let cands = self.path(Subproblem::Mean(&loss), Stage::Mean, &[], &lambdas, init, |t, b| {
            t.criterion(b, &t.fallback_theta(b))
        })?;
        self.pick(cands, Stage::Mean, 1)
    }

    fn tune_weighted_mean(&mut self, theta: &[f64], sweep: usize) -> Result<(Vec<f64>, f64)> {
        let loss = self.ctx.weighted_loss(theta, self.cfg.gls_weights)?;
        let lambdas = self
            .grid
            .resolve(self.grid.lambda_s_grid.as_ref(), self.ctx.mean_lambda_max(&loss));
        let init = self.ctx.mean_start(&loss);
        let theta = theta.to_vec();
        let cands = self.path(Subproblem::Mean(&loss), Stage::WeightedMean, &theta, &lambdas, init, |t, b| {
            t.criterion(b, &theta)
        })?;
        self.pick(cands, Stage::WeightedMean, sweep)
    }

    /// `None` when the residuals of `beta` are degenerate.
    fn tune_variance(&mut self, beta: &[f64], sweep: usize, lambdas: Option<&[f64]>) -> Result<Option<(Vec<f64>, f64)>> {
        let loss = match self.ctx.variance_loss(beta) {
            Ok(l) => l,
            Err(Error::DegenerateResiduals) => return Ok(None),
            Err(e) => return Err(e),
        };
        let lambdas = match lambdas {
            Some(l) => l.to_vec(),
            None => self
                .grid
                .resolve(self.grid.lambda_t_grid.as_ref(), self.ctx.variance_lambda_max(&loss)),
        };
        let init = self.ctx.variance_start(&loss);
        let beta = beta.to_vec();
        let cands = self.path(Subproblem::Variance(&loss), Stage::Variance, &beta, &lambdas, init, |t, th| {
            t.criterion(&beta, th)
        })?;
        self.pick(cands, Stage::Variance, sweep).map(Some)
    }

    fn record(&self, params: &ModelParams, lambda_s: Option<f64>, lambda_t: Option<f64>) -> Result<SweepRecord> {
        Ok(SweepRecord {
            beta: params.beta.clone(),
            theta: params.theta.clone(),
            lambda_s,
            lambda_t,
            criterion_value: information_criterion(self.ctx.d, params, self.grid.criterion)?,
        })
    }

    fn finish(
        self,
        params: ModelParams,
        lambda_s: Option<f64>,
        lambda_t: Option<f64>,
        sweeps: Vec<SweepRecord>,
        fallback: bool,
    ) -> Result<FitResult> {
        let criterion_value = information_criterion(self.ctx.d, &params, self.grid.criterion)?;
        Ok(FitResult {
            df: params.df(),
            params,
            penalty_family: self.cfg.penalty_family,
            criterion: self.grid.criterion,
            lambda_s,
            lambda_t,
            criterion_value,
            objective_trace: self.traces,
            n_iterations: self.iters,
            sweeps,
            converged: self.converged,
            homoscedastic_fallback: fallback,
            max_trace_increase: self.max_inc,
        })
    }

    fn stagewise(mut self) -> Result<FitResult> {
        let mut sweeps = Vec::with_capacity(self.cfg.n_sweeps);
        let (mut beta, mut lambda_s) = self.tune_unit_mean()?;
        let mut last: Option<(Vec<f64>, f64)> = None;
        for sweep in 1..=self.cfg.n_sweeps {
            if let Some((theta, _)) = &last {
                let theta = theta.clone();
                (beta, lambda_s) = self.tune_weighted_mean(&theta, sweep)?;
            }
            match self.tune_variance(&beta, sweep, None)? {
                Some((theta, lambda_t)) => {
                    let params = self.params(&beta, &theta);
                    sweeps.push(self.record(&params, Some(lambda_s), Some(lambda_t))?);
                    last = Some((theta, lambda_t));
                }
                None => {
                    let params = self.params(&beta, &self.fallback_theta(&beta));
                    sweeps.push(self.record(&params, Some(lambda_s), None)?);
                    return self.finish(params, Some(lambda_s), None, sweeps, true);
                }
            }
        }
        let (theta, lambda_t) = last.expect("at least one sweep");
        let params = self.params(&beta, &theta);
        self.finish(params, Some(lambda_s), Some(lambda_t), sweeps, false)
    }

    /// Exhaustive search over `(lambda_S, lambda_T)` pairs. The lambda_T
    /// grid for each lambda_S is built from that fit's residuals unless an
    /// explicit grid is given.
    fn product(mut self) -> Result<FitResult> {
        let loss = self.ctx.unit_loss()?;
        let s_grid = self
            .grid
            .resolve(self.grid.lambda_s_grid.as_ref(), self.ctx.mean_lambda_max(&loss));
        let mut b_start = self.ctx.mean_start(&loss);
        // (criterion, df, params, sweeps, lambda_s, lambda_t)
        type Best = (f64, usize, ModelParams, Vec<SweepRecord>, f64, Option<f64>);
        let mut best: Option<Best> = None;
        let mut consider = |crit: f64, params: ModelParams, sweeps: Vec<SweepRecord>, ls: f64, lt: Option<f64>| {
            let df = params.df();
            let better = match &best {
                None => crit.is_finite(),
                Some((bc, bdf, ..)) => crit < *bc || (crit == *bc && df < *bdf),
            };
            if better {
                best = Some((crit, df, params, sweeps, ls, lt));
            }
        };

        for &ls in &s_grid {
            let spec_s = self.cfg.spec(ls)?;
            let fit = lla_solve(Subproblem::Mean(&loss), &self.ctx.mean_mask, &spec_s, &self.cfg.solver, &b_start)?;
            self.note(Stage::Mean, &fit);
            b_start.clone_from(&fit.coef);
            let beta1 = fit.coef;
            let vloss = match self.ctx.variance_loss(&beta1) {
                Ok(l) => l,
                Err(Error::DegenerateResiduals) => {
                    let params = self.params(&beta1, &self.fallback_theta(&beta1));
                    let rec = self.record(&params, Some(ls), None)?;
                    consider(rec.criterion_value, params, vec![rec], ls, None);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let t_grid = self
                .grid
                .resolve(self.grid.lambda_t_grid.as_ref(), self.ctx.variance_lambda_max(&vloss));
            let mut t_start = self.ctx.variance_start(&vloss);
            for &lt in &t_grid {
                let spec_t = self.cfg.spec(lt)?;
                let vfit = lla_solve(Subproblem::Variance(&vloss), &self.ctx.var_mask, &spec_t, &self.cfg.solver, &t_start)?;
                self.note(Stage::Variance, &vfit);
                t_start.clone_from(&vfit.coef);
                let mut beta = beta1.clone();
                let mut theta = vfit.coef;
                let mut recs = vec![self.record(&self.params(&beta, &theta), Some(ls), Some(lt))?];
                let mut lt_final = Some(lt);
                for _ in 2..=self.cfg.n_sweeps {
                    let wl = self.ctx.weighted_loss(&theta, self.cfg.gls_weights)?;
                    let wfit = lla_solve(Subproblem::Mean(&wl), &self.ctx.mean_mask, &spec_s, &self.cfg.solver, &beta)?;
                    self.note(Stage::WeightedMean, &wfit);
                    beta = wfit.coef;
                    match self.ctx.variance_loss(&beta) {
                        Ok(vl) => {
                            let v2 = lla_solve(Subproblem::Variance(&vl), &self.ctx.var_mask, &spec_t, &self.cfg.solver, &theta)?;
                            self.note(Stage::Variance, &v2);
                            theta = v2.coef;
                        }
                        Err(Error::DegenerateResiduals) => {
                            theta = self.fallback_theta(&beta);
                            lt_final = None;
                        }
                        Err(e) => return Err(e),
                    }
                    recs.push(self.record(&self.params(&beta, &theta), Some(ls), lt_final)?);
                    if lt_final.is_none() {
                        break;
                    }
                }
                let params = self.params(&beta, &theta);
                let crit = recs.last().expect("non-empty").criterion_value;
                consider(crit, params, recs, ls, lt_final);
            }
        }
        let (_, _, params, sweeps, ls, lt) =
            best.ok_or_else(|| Error::InvalidArgument("no finite criterion value on the lambda grid".into()))?;
        let fallback = lt.is_none();
        self.finish(params, Some(ls), lt, sweeps, fallback)
    }
}
