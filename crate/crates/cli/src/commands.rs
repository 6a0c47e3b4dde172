use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use hippo_core::evalsim::{
    heteroscedasticity_diagnostics, kfold_cv, run_monte_carlo, CvReport, Diagnostics, Estimator, Method,
    SimulationSpec,
};
use hippo_core::pipeline::{fit_hippo, Criterion, FitResult, GlsWeights, GridSpec, PipelineConfig, SearchMode};
use hippo_core::{predict_mean, residuals, variance_scale, Dataset, PenaltyFamily};
use serde::Serialize;

use crate::csvio::{read_matrix, read_vector};
use crate::{
    CliError, CriterionArg, CvArgs, DataArgs, DiagnoseArgs, FitArgs, GlsArg, MethodArg, MethodArgs, PenaltyArg,
    SearchArg, SimulateArgs, TuningArgs,
};

type CmdResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn criterion(c: CriterionArg) -> Criterion {
    match c {
        CriterionArg::Aic => Criterion::Aic,
        CriterionArg::Bic => Criterion::Bic,
    }
}

fn method(m: MethodArg) -> Method {
    match m {
        MethodArg::Hippo => Method::Hippo,
        MethodArg::Hhr => Method::Hhr,
    }
}

fn penalty_family(m: &MethodArgs) -> Result<PenaltyFamily, CliError> {
    match (m.method, m.penalty) {
        (MethodArg::Hhr, Some(PenaltyArg::Scad)) => Err(usage("--method hhr is the L1 procedure; --penalty scad is not allowed")),
        (MethodArg::Hippo, None | Some(PenaltyArg::Scad)) => Ok(PenaltyFamily::Scad),
        (_, Some(PenaltyArg::L1)) | (MethodArg::Hhr, None) => Ok(PenaltyFamily::L1),
    }
}

fn pipeline_config(t: &TuningArgs, family: PenaltyFamily) -> Result<PipelineConfig, CliError> {
    let cfg = PipelineConfig {
        penalty_family: family,
        n_sweeps: t.sweeps,
        gls_weights: match t.gls_weights {
            GlsArg::InverseSd => GlsWeights::InverseSd,
            GlsArg::InverseVariance => GlsWeights::InverseVariance,
        },
        ..PipelineConfig::hippo()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn grid_spec(t: &TuningArgs) -> Result<GridSpec, CliError> {
    let grid = GridSpec {
        n_lambda: t.n_lambda,
        min_ratio: t.lambda_ratio,
        search: match t.search {
            SearchArg::Stagewise => SearchMode::Stagewise,
            SearchArg::Product => SearchMode::Product,
        },
        ..GridSpec::new(criterion(t.criterion))
    };
    grid.validate().map_err(|e| usage(e.to_string()))?;
    Ok(grid)
}

fn jobs(j: Option<usize>) -> Result<usize, CliError> {
    match j {
        Some(0) => Err(usage("--jobs must be at least 1")),
        Some(j) => Ok(j),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn load(data: &DataArgs) -> anyhow::Result<Dataset> {
    let x = read_matrix(&data.x, data.header)?;
    let y = read_vector(&data.y, data.header)?;
    if x.nrows() != y.len() {
        bail!(
            "{} has {} rows but {} has {}",
            data.x.display(),
            x.nrows(),
            data.y.display(),
            y.len()
        );
    }
    let d = Dataset::new(x, y, !data.no_mean_intercept, !data.no_var_intercept)?;
    Ok(if data.standardize { d.standardized() } else { d })
}

fn emit(path: Option<&Path>, contents: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, contents).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

const FALLBACK_NOTE: &str =
    "residuals of the mean fit are numerically zero; the variance model was replaced by an intercept-only fit";

/// What `fit` writes.
#[derive(Serialize)]
struct FitReport<'a> {
    method: &'static str,
    standardized: bool,
    /// Covariate indices (0-based) with non-zero mean slopes.
    mean_support: Vec<usize>,
    /// Covariate indices (0-based) with non-zero variance slopes.
    variance_support: Vec<usize>,
    note: Option<&'static str>,
    fit: &'a FitResult,
}

fn slope_support(coef: &ndarray::Array1<f64>, intercept: bool) -> Vec<usize> {
    let skip = usize::from(intercept);
    (skip..coef.len()).filter(|&j| coef[j] != 0.0).map(|j| j - skip).collect()
}

fn run_fit(d: &Dataset, m: &MethodArgs, t: &TuningArgs) -> Result<(FitResult, PenaltyFamily), CliError> {
    let family = penalty_family(m)?;
    let cfg = pipeline_config(t, family)?;
    let grid = grid_spec(t)?;
    let fit = fit_hippo(d, &grid, &cfg).map_err(|e| CliError::Runtime(e.into()))?;
    if fit.homoscedastic_fallback {
        eprintln!("note: {FALLBACK_NOTE}");
    }
    Ok((fit, family))
}

pub fn fit(a: &FitArgs) -> CmdResult {
    penalty_family(&a.method)?;
    let d = load(&a.data)?;
    let (fit, family) = run_fit(&d, &a.method, &a.tuning)?;
    let report = FitReport {
        method: match family {
            PenaltyFamily::Scad => "HIPPO",
            PenaltyFamily::L1 => "HHR",
        },
        standardized: a.data.standardize,
        mean_support: slope_support(&fit.params.beta, fit.params.mean_intercept),
        variance_support: slope_support(&fit.params.theta, fit.params.var_intercept),
        note: fit.homoscedastic_fallback.then_some(FALLBACK_NOTE),
        fit: &fit,
    };
    emit(a.out.as_deref(), &to_json(&report)?)?;
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> CmdResult {
    let mut spec = match a.example {
        1 => SimulationSpec::example1(a.n, a.p.unwrap_or(2000), a.rho, a.reps, a.seed),
        _ => {
            if a.p.is_some_and(|p| p != hippo_core::evalsim::EXAMPLE2_P) {
                return Err(usage(format!("example 2 has p = {}", hippo_core::evalsim::EXAMPLE2_P)));
            }
            if a.rho != 0.0 {
                return Err(usage("--rho applies to example 1 only"));
            }
            SimulationSpec::example2(a.n, a.reps, a.seed)
        }
    };
    let methods: Vec<Method> = a.methods.iter().map(|&m| method(m)).collect();
    let criteria: Vec<Criterion> = a.criteria.iter().map(|&c| criterion(c)).collect();
    spec.estimators = Estimator::all()
        .into_iter()
        .filter(|e| methods.contains(&e.method) && criteria.contains(&e.criterion))
        .collect();
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let cfg = pipeline_config(&a.tuning, PenaltyFamily::Scad)?;
    let grid = grid_spec(&a.tuning)?;
    let report = run_monte_carlo(&spec, &cfg, &grid, jobs(a.jobs)?).map_err(|e| CliError::Runtime(e.into()))?;
    for f in &report.failures {
        eprintln!("warning: replicate {} {}: {}", f.replicate, f.estimator, f.message);
    }
    emit(a.out_tsv.as_deref(), &report.to_tsv())?;
    if let Some(p) = &a.out_json {
        emit(Some(p), &report.to_json())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CvEntry {
    method: &'static str,
    report: CvReport,
}

fn cv_table(entries: &[CvEntry]) -> String {
    let mut s = String::from("method\tfolds\tmse\tpartial_prediction_score\tmean_support\tvar_support\tskipped_folds\n");
    for e in entries {
        let r = &e.report;
        let _ = writeln!(
            s,
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}",
            e.method, r.k, r.mse, r.partial_prediction_score, r.mean_support, r.var_support, r.skipped_folds
        );
    }
    s
}

pub fn cv(a: &CvArgs) -> CmdResult {
    if a.folds < 2 {
        return Err(usage(format!("--folds must be at least 2, got {}", a.folds)));
    }
    let grid = grid_spec(&a.tuning)?;
    let jobs = jobs(a.jobs)?;
    let d = load(&a.data)?;
    let mut entries = Vec::new();
    for &m in &a.methods {
        let m = method(m);
        let cfg = pipeline_config(&a.tuning, m.penalty_family())?;
        let report = kfold_cv(&d, a.folds, a.seed, &grid, &cfg, jobs).map_err(|e| CliError::Runtime(e.into()))?;
        for f in report.folds.iter().filter(|f| f.skipped.is_some()) {
            eprintln!("warning: {} fold {} skipped: {}", m.label(), f.fold, f.skipped.as_deref().unwrap_or(""));
        }
        entries.push(CvEntry { method: m.label(), report });
    }
    emit(a.out_tsv.as_deref(), &cv_table(&entries))?;
    if let Some(p) = &a.out_json {
        emit(Some(p), &to_json(&entries)?)?;
    }
    Ok(())
}

/// `bins - 1` cut points at equal-count positions of the sorted values;
/// repeated values are merged.
fn quantile_breakpoints(values: &[f64], bins: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut cuts: Vec<f64> = (1..bins).map(|k| v[(k * n / bins).max(1) - 1]).collect();
    cuts.dedup();
    cuts
}

fn diagnostics_text(d: &Diagnostics) -> String {
    let mut s = String::from("bin\tlower\tupper\tcount\tmin\tq1\tmedian\tq3\tmax\tvariance\n");
    for (i, b) in d.bins.iter().enumerate() {
        let _ = writeln!(
            s,
            "{}\t{:.4}\t{:.4}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            i + 1,
            b.lower,
            b.upper,
            b.count,
            b.min,
            b.q1,
            b.median,
            b.q3,
            b.max,
            b.variance
        );
    }
    s.push_str("\nbin_a\tbin_b\tF\tdf_num\tdf_den\tp_value\n");
    for p in &d.pairs {
        let _ = writeln!(
            s,
            "{}\t{}\t{:.4}\t{}\t{}\t{:.4}",
            p.bin_a + 1,
            p.bin_b + 1,
            p.test.statistic,
            p.test.df_num,
            p.test.df_den,
            p.test.p_value
        );
    }
    for w in &d.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

pub fn diagnose(a: &DiagnoseArgs) -> CmdResult {
    penalty_family(&a.method)?;
    if a.breakpoints.is_none() && a.bins < 2 {
        return Err(usage("--bins must be at least 2"));
    }
    let d = load(&a.data)?;
    let (fit, _) = run_fit(&d, &a.method, &a.tuning)?;
    let runtime = |e: hippo_core::Error| CliError::Runtime(anyhow!(e));
    let fitted = predict_mean(&d, &fit.params).map_err(runtime)?;
    let resid = residuals(&d, &fit.params).map_err(runtime)?;
    let scale = variance_scale(&d, &fit.params).map_err(runtime)?;
    let fitted = fitted.to_vec();
    let breaks = match &a.breakpoints {
        Some(b) => b.clone(),
        None => quantile_breakpoints(&fitted, a.bins),
    };
    let scale = scale.to_vec();
    let diag = heteroscedasticity_diagnostics(
        &fitted,
        resid.as_slice().expect("contiguous residuals"),
        a.fitted_scale.then_some(scale.as_slice()),
        &breaks,
    )
    .map_err(|e| CliError::Runtime(e.into()))?;
    emit(a.out.as_deref(), &diagnostics_text(&diag))?;
    if let Some(p) = &a.out_json {
        emit(Some(p), &to_json(&diag)?)?;
    }
    Ok(())
}
