mod common;

use common::*;

#[test]
fn zero_penalty_weighted_lasso_matches_closed_form() {
    let err = wls_max_error(20);
    assert!(err < 1e-6, "max error {err}");
}

#[test]
fn variance_solver_matches_grid_search() {
    let err = variance_grid_max_error(10);
    assert!(err < 2e-3, "max error {err}");
}

#[test]
fn both_solvers_satisfy_optimality_conditions() {
    let (ls, var) = kkt_max_residuals(50, 50, 20);
    assert!(ls <= 1e-4 && var <= 1e-4, "least squares {ls}, variance {var}");
}

#[test]
fn working_set_solves_satisfy_optimality_conditions() {
    // p > n exercises the restricted solves and the violator checks.
    let (ls, var) = kkt_max_residuals(10, 40, 120);
    assert!(ls <= 1e-4 && var <= 1e-4, "least squares {ls}, variance {var}");
}

#[test]
fn analytic_minimizers() {
    let (var, lasso) = analytic_max_errors(30);
    assert!(var < 1e-8, "intercept-only variance {var}");
    assert!(lasso < 1e-8, "one-column lasso {lasso}");
}
