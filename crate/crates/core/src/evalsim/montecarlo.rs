use std::fmt::{self, Write as _};

use ndarray::{s, Array1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate_example1, generate_example2, generate_from, TrueModel, EXAMPLE2_P};
use super::metrics::{l2_error, support_metrics, Summary};
use super::rng::mix_seed;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::penalty::PenaltyFamily;
use crate::pipeline::{
    fit_hippo_criteria, fit_variance_known_mean_criteria, Criterion, FitResult, GridSpec, PipelineConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// SCAD penalty.
    Hippo,
    /// L1 penalty.
    Hhr,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Hippo => "HIPPO",
            Method::Hhr => "HHR",
        }
    }

    pub fn penalty_family(self) -> PenaltyFamily {
        match self {
            Method::Hippo => PenaltyFamily::Scad,
            Method::Hhr => PenaltyFamily::L1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Estimator {
    pub method: Method,
    pub criterion: Criterion,
}

impl Estimator {
    pub fn new(method: Method, criterion: Criterion) -> Self {
        Self { method, criterion }
    }

    /// HHR-AIC, HIPPO-AIC, HHR-BIC, HIPPO-BIC.
    pub fn all() -> Vec<Estimator> {
        let mut v = Vec::with_capacity(4);
        for criterion in [Criterion::Aic, Criterion::Bic] {
            for method in [Method::Hhr, Method::Hippo] {
                v.push(Estimator::new(method, criterion));
            }
        }
        v
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.method.label(), self.criterion.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Example {
    /// Known zero mean, variance only.
    Ex1,
    /// Mean and variance, `p = 600`.
    Ex2,
    /// Any generating model; mean and variance are both estimated.
    Custom { truth: TrueModel },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub example: Example,
    pub n: usize,
    pub p: usize,
    /// Equicorrelation of the first three covariates (example 1 only).
    pub rho: f64,
    pub reps: usize,
    pub master_seed: u64,
    pub estimators: Vec<Estimator>,
}

impl SimulationSpec {
    pub fn example1(n: usize, p: usize, rho: f64, reps: usize, master_seed: u64) -> Self {
        Self {
            example: Example::Ex1,
            n,
            p,
            rho,
            reps,
            master_seed,
            estimators: Estimator::all(),
        }
    }

    pub fn example2(n: usize, reps: usize, master_seed: u64) -> Self {
        Self {
            example: Example::Ex2,
            n,
            p: EXAMPLE2_P,
            rho: 0.0,
            reps,
            master_seed,
            estimators: Estimator::all(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.reps == 0 {
            return Err(Error::InvalidArgument("n, p and reps must all be >= 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidArgument("at least one estimator is required".into()));
        }
        match &self.example {
            Example::Ex1 => {
                if self.p < 3 {
                    return Err(Error::InvalidArgument(format!("example 1 needs p >= 3, got {}", self.p)));
                }
                if !(0.0..1.0).contains(&self.rho) {
                    return Err(Error::InvalidArgument(format!("rho must lie in [0, 1), got {}", self.rho)));
                }
            }
            Example::Ex2 => {
                if self.p != EXAMPLE2_P {
                    return Err(Error::InvalidArgument(format!(
                        "example 2 has p = {EXAMPLE2_P}, got {}",
                        self.p
                    )));
                }
            }
            Example::Custom { truth } => {
                let p = truth.beta_star.len() - usize::from(truth.mean_intercept);
                if p != self.p {
                    return Err(Error::DimensionMismatch(format!(
                        "custom model has p = {p} but the spec says {}",
                        self.p
                    )));
                }
            }
        }
        Ok(())
    }

    /// Seed of replicate `r`.
    pub fn replicate_seed(&self, r: usize) -> u64 {
        mix_seed(self.master_seed, r as u64)
    }

    fn estimates_mean(&self) -> bool {
        !matches!(self.example, Example::Ex1)
    }

    fn draw(&self, r: usize) -> Result<(Dataset, TrueModel)> {
        let seed = self.replicate_seed(r);
        match &self.example {
            Example::Ex1 => generate_example1(self.n, self.p, self.rho, seed),
            Example::Ex2 => generate_example2(self.n, seed),
            Example::Custom { truth } => Ok((generate_from(self.n, truth, seed)?, truth.clone())),
        }
    }
}

/// Accuracy of one estimator on one replicate after one iteration. Mean
/// metrics are absent when the mean is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub estimator: Estimator,
    pub iteration: usize,
    pub beta_error: Option<f64>,
    pub beta_precision: Option<f64>,
    pub beta_recall: Option<f64>,
    pub theta_error: f64,
    pub theta_precision: f64,
    pub theta_recall: f64,
    pub converged: bool,
    /// Largest relative LLA objective increase seen anywhere in the fit.
    pub max_trace_increase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub replicate: usize,
    pub estimator: Estimator,
    pub message: String,
}

/// Mean and sample sd of one metric over the records of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl From<Summary> for MeanSd {
    fn from(s: Summary) -> Self {
        Self { mean: s.mean, sd: s.sd() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub estimator: Estimator,
    pub iteration: usize,
    pub count: usize,
    pub beta_error: Option<MeanSd>,
    pub beta_precision: Option<MeanSd>,
    pub beta_recall: Option<MeanSd>,
    pub theta_error: MeanSd,
    pub theta_precision: MeanSd,
    pub theta_recall: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub spec: SimulationSpec,
    pub records: Vec<ReplicateRecord>,
    pub failures: Vec<FailureRecord>,
    pub cells: Vec<CellSummary>,
}

impl SimulationReport {
    /// Cell of `estimator` after `iteration` (1-based).
    pub fn cell(&self, estimator: Estimator, iteration: usize) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.estimator == estimator && c.iteration == iteration)
    }

    /// Aggregate table, one row per estimator and iteration, four decimals.
    pub fn to_tsv(&self) -> String {
        let with_mean = self.spec.estimates_mean();
        let metrics: &[&str] = if with_mean {
            &["beta_error", "beta_precision", "beta_recall", "theta_error", "theta_precision", "theta_recall"]
        } else {
            &["theta_error", "theta_precision", "theta_recall"]
        };
        let mut out = String::from("estimator\titeration\tcount");
        for m in metrics {
            let _ = write!(out, "\t{m}_mean\t{m}_sd");
        }
        out.push('\n');
        for c in &self.cells {
            let _ = write!(out, "{}\t{}\t{}", c.estimator, c.iteration, c.count);
            let mut cols: Vec<Option<MeanSd>> = Vec::with_capacity(6);
            if with_mean {
                cols.extend([c.beta_error, c.beta_precision, c.beta_recall]);
            }
            cols.extend([Some(c.theta_error), Some(c.theta_precision), Some(c.theta_recall)]);
            for v in cols {
                match v {
                    Some(v) => {
                        let _ = write!(out, "\t{:.4}\t{:.4}", v.mean, v.sd);
                    }
                    None => out.push_str("\tNA\tNA"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json_string(self)
    }

    /// Recomputes the cell summaries from the stored records.
    pub fn recompute_cells(&self) -> Vec<CellSummary> {
        aggregate(&self.spec, &self.records)
    }
}

fn serde_json_string<T: Serialize>(v: &T) -> String {
    // Every field is a plain number, string, bool or sequence thereof.
    serde_json::to_string_pretty(v).expect("report serializes")
}

/// Runs `spec.reps` replicates on `jobs` threads (`0` uses the rayon
/// default). Replicate `r` draws its data from seed
/// `mix_seed(master_seed, r)`, so the report does not depend on `jobs`.
/// Fit errors are recorded per replicate and estimator, not propagated.
pub fn run_monte_carlo(
    spec: &SimulationSpec,
    cfg: &PipelineConfig,
    grid: &GridSpec,
    jobs: usize,
) -> Result<SimulationReport> {
    spec.validate()?;
    cfg.validate()?;
    grid.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker threads: {e}")))?;
    let outcomes: Vec<(Vec<ReplicateRecord>, Vec<FailureRecord>)> =
        pool.install(|| (0..spec.reps).into_par_iter().map(|r| run_replicate(spec, cfg, grid, r)).collect());

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (rec, fail) in outcomes {
        records.extend(rec);
        failures.extend(fail);
    }
    let cells = aggregate(spec, &records);
    Ok(SimulationReport {
        spec: spec.clone(),
        records,
        failures,
        cells,
    })
}

fn run_replicate(
    spec: &SimulationSpec,
    cfg: &PipelineConfig,
    grid: &GridSpec,
    r: usize,
) -> (Vec<ReplicateRecord>, Vec<FailureRecord>) {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let fail_all = |failures: &mut Vec<FailureRecord>, ests: &[Estimator], e: &Error| {
        failures.extend(ests.iter().map(|&estimator| FailureRecord {
            replicate: r,
            estimator,
            message: e.to_string(),
        }));
    };
    let (d, truth) = match spec.draw(r) {
        Ok(v) => v,
        Err(e) => {
            fail_all(&mut failures, &spec.estimators, &e);
            return (records, failures);
        }
    };

    // One call per method so the criteria share their lambda paths.
    let mut methods: Vec<Method> = Vec::new();
    for e in &spec.estimators {
        if !methods.contains(&e.method) {
            methods.push(e.method);
        }
    }
    for method in methods {
        let ests: Vec<Estimator> = spec.estimators.iter().copied().filter(|e| e.method == method).collect();
        let criteria: Vec<Criterion> = ests.iter().map(|e| e.criterion).collect();
        let mcfg = PipelineConfig {
            penalty_family: method.penalty_family(),
            ..cfg.clone()
        };
        let fits = if spec.estimates_mean() {
            fit_hippo_criteria(&d, grid, &mcfg, &criteria)
        } else {
            fit_variance_known_mean_criteria(&d, &truth.beta_star, grid, &mcfg, &criteria)
        };
        match fits {
            Ok(fits) => {
                for (estimator, fit) in ests.into_iter().zip(fits) {
                    match evaluate(spec, &truth, &fit, r, estimator) {
                        Ok(rec) => records.extend(rec),
                        Err(e) => fail_all(&mut failures, &[estimator], &e),
                    }
                }
            }
            Err(e) => fail_all(&mut failures, &ests, &e),
        }
    }
    // Records in estimator order, then iteration.
    records.sort_by_key(|rec| {
        let pos = spec.estimators.iter().position(|e| *e == rec.estimator).unwrap_or(usize::MAX);
        (pos, rec.iteration)
    });
    (records, failures)
}

fn evaluate(
    spec: &SimulationSpec,
    truth: &TrueModel,
    fit: &FitResult,
    r: usize,
    estimator: Estimator,
) -> Result<Vec<ReplicateRecord>> {
    let slopes = |v: &Array1<f64>, intercept: bool| v.slice(s![usize::from(intercept)..]).to_owned();
    let beta_true = truth.beta_slopes();
    let theta_true = truth.theta_slopes();
    let mut out = Vec::with_capacity(fit.sweeps.len());
    for (k, sweep) in fit.sweeps.iter().enumerate() {
        let tm = support_metrics(&slopes(&sweep.theta, truth.var_intercept), &theta_true)?;
        let (be, bp, br) = if spec.estimates_mean() {
            let bm = support_metrics(&slopes(&sweep.beta, truth.mean_intercept), &beta_true)?;
            (
                Some(l2_error(&sweep.beta, &truth.beta_star)),
                Some(bm.precision),
                Some(bm.recall),
            )
        } else {
            (None, None, None)
        };
        out.push(ReplicateRecord {
            replicate: r,
            estimator,
            iteration: k + 1,
            beta_error: be,
            beta_precision: bp,
            beta_recall: br,
            theta_error: l2_error(&sweep.theta, &truth.theta_star),
            theta_precision: tm.precision,
            theta_recall: tm.recall,
            converged: fit.converged,
            max_trace_increase: fit.max_trace_increase,
        });
    }
    Ok(out)
}

fn aggregate(spec: &SimulationSpec, records: &[ReplicateRecord]) -> Vec<CellSummary> {
    let max_iter = records.iter().map(|r| r.iteration).max().unwrap_or(0);
    let mut cells = Vec::new();
    for &estimator in &spec.estimators {
        for iteration in 1..=max_iter {
            let rows: Vec<&ReplicateRecord> = records
                .iter()
                .filter(|r| r.estimator == estimator && r.iteration == iteration)
                .collect();
            if rows.is_empty() {
                continue;
            }
            let summarize = |f: &dyn Fn(&ReplicateRecord) -> f64| -> MeanSd {
                rows.iter().map(|r| f(r)).collect::<Summary>().into()
            };
            let optional = |f: &dyn Fn(&ReplicateRecord) -> Option<f64>| -> Option<MeanSd> {
                let v: Option<Vec<f64>> = rows.iter().map(|r| f(r)).collect();
                v.map(|v| v.into_iter().collect::<Summary>().into())
            };
            cells.push(CellSummary {
                estimator,
                iteration,
                count: rows.len(),
                beta_error: optional(&|r| r.beta_error),
                beta_precision: optional(&|r| r.beta_precision),
                beta_recall: optional(&|r| r.beta_recall),
                theta_error: summarize(&|r| r.theta_error),
                theta_precision: summarize(&|r| r.theta_precision),
                theta_recall: summarize(&|r| r.theta_recall),
            });
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SimulationSpec {
        let truth = TrueModel {
            beta_star: Array1::from(vec![1.0, 2.0, 0.0, 0.0, -1.5, 0.0]),
            theta_star: Array1::from(vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
            covariance: super::super::generate::Covariance::Ar1 { rho: 0.3 },
            mean_intercept: true,
            var_intercept: true,
        };
        SimulationSpec {
            example: Example::Custom { truth },
            n: 60,
            p: 5,
            rho: 0.0,
            reps: 4,
            master_seed: 11,
            estimators: Estimator::all(),
        }
    }

    #[test]
    fn labels() {
        let e = Estimator::all();
        let labels: Vec<String> = e.iter().map(|e| e.to_string()).collect();
        assert_eq!(labels, ["HHR-AIC", "HIPPO-AIC", "HHR-BIC", "HIPPO-BIC"]);
    }

    #[test]
    fn report_is_consistent_and_thread_independent() {
        let spec = small_spec();
        let grid = GridSpec::new(Criterion::Bic);
        let one = run_monte_carlo(&spec, &PipelineConfig::hippo(), &grid, 1).unwrap();
        let two = run_monte_carlo(&spec, &PipelineConfig::hippo(), &grid, 2).unwrap();
        assert_eq!(one.to_json(), two.to_json());
        assert_eq!(one.to_tsv(), two.to_tsv());
        assert!(one.failures.is_empty());
        assert_eq!(one.records.len(), spec.reps * spec.estimators.len() * 2);
        assert_eq!(one.recompute_cells(), one.cells);
        let cell = one.cell(Estimator::new(Method::Hippo, Criterion::Bic), 2).unwrap();
        assert_eq!(cell.count, spec.reps);
        assert!(cell.beta_error.is_some());
        let tsv = one.to_tsv();
        assert_eq!(tsv.lines().count(), 1 + one.cells.len());
        assert!(tsv.starts_with("estimator\titeration\tcount\tbeta_error_mean"));
    }

    #[test]
    fn known_mean_table_has_no_mean_columns() {
        let spec = SimulationSpec::example1(40, 30, 0.0, 2, 3);
        let report = run_monte_carlo(&spec, &PipelineConfig::hippo(), &GridSpec::new(Criterion::Bic), 1).unwrap();
        assert!(report.records.iter().all(|r| r.beta_error.is_none() && r.iteration == 1));
        let header = report.to_tsv().lines().next().unwrap().to_string();
        assert!(!header.contains("beta"));
        assert_eq!(report.cells.len(), 4);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = SimulationSpec::example2(50, 1, 0);
        spec.p = 10;
        assert!(spec.validate().is_err());
        let mut spec = SimulationSpec::example1(50, 10, 0.0, 1, 0);
        spec.reps = 0;
        assert!(spec.validate().is_err());
        spec.reps = 1;
        spec.estimators.clear();
        assert!(spec.validate().is_err());
    }
}
