//! Multi-start convergence suites: every start in a small ball converges and
//! one constant bounds `||e_{k+1}|| / ||e_k||^2` across all runs.

use nalgebra::DVector;
use pfactor::conlag::{classify_and_build_h, two_factor_solve, ConstrainedProblem};
use pfactor::pfactor::build_newton_chain;
use pfactor::sampling;
use pfactor::solvers::{pfactor_newton, SolveOptions, SolveReport, SolveStatus};
use pfactor::MappingModel;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn starts(n: usize, radius: f64, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = sampling::rng(seed);
    (0..20).map(|_| sampling::in_ball(&mut rng, n, radius)).collect()
}

/// Returns the largest ratio over all runs.
fn check_suite(reports: &[SolveReport], max_iter: usize, floor: f64) -> f64 {
    let mut constant: f64 = 0.0;
    for (i, r) in reports.iter().enumerate() {
        assert_eq!(r.status, SolveStatus::Converged, "run {i}");
        assert!(r.iterations() <= max_iter, "run {i}: {} iterations", r.iterations());
        let last = r.history.last().unwrap();
        assert!(last.distance_to_root.unwrap() <= floor, "run {i}: {:?}", last.distance_to_root);
        let rate = r.rate.as_ref().expect("rate fit");
        assert!(!rate.ratios.is_empty(), "run {i}");
        constant = constant.max(rate.constant);
    }
    assert!(constant.is_finite());
    constant
}

#[test]
fn ex1_two_factor_newton() {
    let model = MappingModel::parse(&["x1 + x2", "x1*x2"], &["x1", "x2"]).unwrap();
    let root = v(&[0.0, 0.0]);
    let chain = build_newton_chain(&model, &root, &v(&[1.0, -1.0]), 2, None).unwrap();
    let opts = SolveOptions::default().with_root(root.clone());
    let reports: Vec<_> = starts(2, 0.05, 1)
        .iter()
        .map(|x0| pfactor_newton(&model, x0, &chain, &opts).unwrap())
        .collect();
    let c = check_suite(&reports, 8, 1e-12);
    assert!(c < 1.0, "{c}");
}

#[test]
fn phi3_three_factor_newton() {
    // gradient of x1^2 + x1^2 x2 + x2^4
    let model = MappingModel::parse(&["2*x1 + 2*x1*x2", "x1^2 + 4*x2^3"], &["x1", "x2"]).unwrap();
    let root = v(&[0.0, 0.0]);
    let chain = build_newton_chain(&model, &root, &v(&[1.0, 1.0]), 3, None).unwrap();
    let opts = SolveOptions::default().with_root(root.clone());
    let reports: Vec<_> = starts(2, 0.05, 2)
        .iter()
        .map(|x0| pfactor_newton(&model, x0, &chain, &opts).unwrap())
        .collect();
    let c = check_suite(&reports, 12, 1e-10);
    assert!(c <= 10.0, "{c}");
}

#[test]
fn ex9_modified_lagrangian() {
    let objective = MappingModel::parse(&["x1^2 + x2^2 + 4*x1*x2"], &["x1", "x2"]).unwrap();
    let constraints = MappingModel::parse(&["-x1", "-x2"], &["x1", "x2"]).unwrap();
    let problem = ConstrainedProblem::new(objective, constraints).unwrap();
    let (classes, h) = classify_and_build_h(&problem, &v(&[0.0, 0.0]), &v(&[0.0, 0.0]), 1e-8).unwrap();
    assert_eq!(classes.weakly_active, vec![0, 1]);
    assert_eq!(h, v(&[0.0, 0.0, 1.0, 1.0]));

    let system = problem.build_system().unwrap();
    let root = DVector::zeros(4);
    let opts = SolveOptions::default().with_root(root.clone());
    let reports: Vec<_> = starts(4, 0.1, 3)
        .iter()
        .map(|w0| two_factor_solve(&system, w0, &h, &opts).unwrap())
        .collect();
    check_suite(&reports, 10, 1e-10);
}
