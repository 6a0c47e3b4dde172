//! Simulation designs, evaluation metrics, Monte Carlo aggregation,
//! cross-validation and heteroscedasticity diagnostics.

mod cv;
mod diagnostics;
mod generate;
mod metrics;
mod montecarlo;
mod normality;
pub mod rng;

pub use generate::{generate_ar1, generate_example1, generate_example2, generate_from, Covariance, TrueModel, EXAMPLE2_P};
pub use metrics::{l2_error, support_metrics, Summary, SupportMetrics};
pub use montecarlo::{
    run_monte_carlo, CellSummary, Estimator, Example, FailureRecord, MeanSd, Method, ReplicateRecord, SimulationReport,
    SimulationSpec,
};
pub use cv::{fold_assignment, holdout_metrics, kfold_cv, CvReport, FoldResult};
pub use diagnostics::{
    f_test, f_test_from_variances, heteroscedasticity_diagnostics, sample_variance, studentize, BinSummary, Diagnostics,
    FTest, PairTest,
};
pub use normality::{ks_distance_normal, oracle_normality_check, NormalityConfig, NormalityReport};
