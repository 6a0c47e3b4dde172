mod commands;
mod csvio;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20240601;

#[derive(Parser, Debug)]
#[command(name = "hippo", version, about = "Heteroscedastic sparse regression by penalized pseudolikelihood")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one model and write the result as JSON.
    Fit(FitArgs),
    /// Reproduce the simulation tables.
    Simulate(SimulateArgs),
    /// k-fold cross-validation of HIPPO and HHR.
    Cv(CvArgs),
    /// Binned residual summaries and F tests for a fitted model.
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Design matrix: headerless numeric CSV, one row per observation.
    #[arg(long)]
    pub x: PathBuf,
    /// Response: a single-column CSV.
    #[arg(long)]
    pub y: PathBuf,
    /// Skip the first line of both files.
    #[arg(long)]
    pub header: bool,
    /// Do not add a mean intercept.
    #[arg(long)]
    pub no_mean_intercept: bool,
    /// Do not add a variance intercept.
    #[arg(long)]
    pub no_var_intercept: bool,
    /// Center and scale the covariates before fitting.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodArg {
    Hippo,
    Hhr,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum PenaltyArg {
    Scad,
    L1,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum CriterionArg {
    Aic,
    Bic,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlsArg {
    /// Weights 1 / sigma.
    InverseSd,
    /// Weights 1 / sigma^2.
    InverseVariance,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchArg {
    Stagewise,
    Product,
}

#[derive(Args, Debug)]
pub struct TuningArgs {
    #[arg(long, value_enum, default_value = "bic")]
    pub criterion: CriterionArg,
    /// Mean/variance sweeps; 2 gives the three-stage fit plus a variance refit.
    #[arg(long, default_value_t = 2)]
    pub sweeps: usize,
    /// Lambda values per stage.
    #[arg(long, default_value_t = 30)]
    pub n_lambda: usize,
    /// Smallest lambda as a fraction of lambda_max.
    #[arg(long, default_value_t = 0.01)]
    pub lambda_ratio: f64,
    #[arg(long, value_enum, default_value = "inverse-sd")]
    pub gls_weights: GlsArg,
    #[arg(long, value_enum, default_value = "stagewise")]
    pub search: SearchArg,
}

#[derive(Args, Debug)]
pub struct MethodArgs {
    #[arg(long, value_enum, default_value = "hippo")]
    pub method: MethodArg,
    /// Defaults to SCAD for HIPPO and L1 for HHR.
    #[arg(long, value_enum)]
    pub penalty: Option<PenaltyArg>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// 1: variance-only design; 2: sparse mean and variance, p = 600.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub example: u8,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Covariates (example 1 only; default 2000).
    #[arg(long)]
    pub p: Option<usize>,
    /// Correlation of the first three covariates (example 1 only).
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Criteria to report, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "aic,bic")]
    pub criteria: Vec<CriterionArg>,
    /// Methods to report, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "hhr,hippo")]
    pub methods: Vec<MethodArg>,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Worker threads (default: available cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Summary table (stdout if omitted).
    #[arg(long)]
    pub out_tsv: Option<PathBuf>,
    /// Full per-replicate report.
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Methods to evaluate, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "hippo,hhr")]
    pub methods: Vec<MethodArg>,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Metrics table (stdout if omitted).
    #[arg(long)]
    pub out_tsv: Option<PathBuf>,
    /// Per-fold results.
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Equal-count bins of the fitted values.
    #[arg(long, default_value_t = 4, conflicts_with = "breakpoints")]
    pub bins: usize,
    /// Explicit ascending bin boundaries on the fitted-value scale.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub breakpoints: Option<Vec<f64>>,
    /// Studentize by the fitted sigma_i instead of the root mean squared residual.
    #[arg(long)]
    pub fitted_scale: bool,
    /// Text report (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
pub enum CliError {
    /// Invalid flag values or combinations: exit 2.
    Usage(String),
    /// Everything else: exit 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Cv(a) => commands::cv(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
