//! Classical and p-factor Newton iterations with per-step diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, Result};
use crate::linalg;
use crate::mapping::MappingModel;
use crate::pfactor::NewtonChain;
use crate::Error;

/// Errors below this size are dominated by rounding and excluded from rate fits.
pub const RATE_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    Diverged,
    SingularMatrix,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub index: usize,
    pub x: Vec<f64>,
    /// Norm of the residual the scheme drives to zero, at `x`.
    pub residual: f64,
    /// Norm of the correction computed at `x`, when one was computed.
    pub step_norm: Option<f64>,
    pub distance_to_root: Option<f64>,
    /// 2-norm condition number of the iteration matrix at `x`.
    pub condition: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    /// `||e_{k+1}|| / ||e_k||^2` for every step with `||e_k|| >= RATE_FLOOR`.
    pub ratios: Vec<f64>,
    /// Largest ratio: one constant bounding every step.
    pub constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub history: Vec<IterationRecord>,
    pub final_point: Vec<f64>,
    pub rate: Option<RateFit>,
}

impl SolveReport {
    pub fn iterations(&self) -> usize {
        self.history.last().map_or(0, |r| r.index)
    }

    pub fn final_residual(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.residual)
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Known root, used for distances and the rate fit.
    pub root: Option<DVector<f64>>,
    pub rank_tol: Option<f64>,
    /// Iterates with norm above this are declared divergent.
    pub divergence_limit: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
            root: None,
            rank_tol: None,
            divergence_limit: 1e12,
        }
    }
}

impl SolveOptions {
    pub fn with_root(mut self, root: DVector<f64>) -> Self {
        self.root = Some(root);
        self
    }
}

/// How a Newton-type run decides it has converged.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopRule {
    /// Residual at or below tolerance.
    Residual,
    /// Residual and the next correction both at or below tolerance.
    ResidualAndStep,
}

/// Runs `x_{k+1} = x_k - M(x_k)^{-1} r(x_k)`.
pub fn newton_like<R, M>(
    x0: &DVector<f64>,
    options: &SolveOptions,
    stop: StopRule,
    mut residual: R,
    mut matrix: M,
) -> Result<SolveReport>
where
    R: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    M: FnMut(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let mut x = x0.clone();
    let mut history = Vec::new();
    let limit = options.divergence_limit * (1.0 + x0.norm());
    let distance = |x: &DVector<f64>| options.root.as_ref().map(|r| (x - r).norm());
    let status = loop {
        let index = history.len();
        let r = residual(&x)?;
        let rn = r.norm();
        let mut record = IterationRecord {
            index,
            x: x.iter().copied().collect(),
            residual: rn,
            step_norm: None,
            distance_to_root: distance(&x),
            condition: None,
        };
        if !rn.is_finite() || x.iter().any(|v| !v.is_finite()) || x.norm() > limit {
            history.push(record);
            break SolveStatus::Diverged;
        }
        if stop == StopRule::Residual && rn <= options.tol {
            history.push(record);
            break SolveStatus::Converged;
        }
        if index >= options.max_iter {
            history.push(record);
            break SolveStatus::MaxIterations;
        }
        let mat = matrix(&x)?;
        let Some((step, cond)) = linalg::solve_square(&mat, &r, options.rank_tol) else {
            history.push(record);
            break SolveStatus::SingularMatrix;
        };
        let sn = step.norm();
        record.step_norm = Some(sn);
        record.condition = Some(cond);
        history.push(record);
        if stop == StopRule::ResidualAndStep && rn <= options.tol && sn <= options.tol {
            break SolveStatus::Converged;
        }
        x -= step;
    };
    let rate = match &options.root {
        Some(root) if history.len() >= 3 => Some(rate_from_history(&history, root)?),
        _ => None,
    };
    Ok(SolveReport {
        status,
        final_point: x.iter().copied().collect(),
        history,
        rate,
    })
}

/// Classical Newton: `x_{k+1} = x_k - F'(x_k)^{-1} F(x_k)`.
pub fn classical_newton(model: &MappingModel, x0: &DVector<f64>, options: &SolveOptions) -> Result<SolveReport> {
    check_dim("start point", model.n(), x0.len())?;
    if model.m() != model.n() {
        return Err(Error::NotSquare {
            rows: model.m(),
            cols: model.n(),
        });
    }
    newton_like(
        x0,
        options,
        StopRule::Residual,
        |x| model.evaluate(x),
        |x| model.jacobian(x),
    )
}

/// p-factor Newton along the chain's direction, with projectors frozen at
/// the root and derivatives re-evaluated at every iterate.
pub fn pfactor_newton(
    model: &MappingModel,
    x0: &DVector<f64>,
    chain: &NewtonChain,
    options: &SolveOptions,
) -> Result<SolveReport> {
    check_dim("start point", model.n(), x0.len())?;
    check_dim("chain direction", model.n(), chain.direction.len())?;
    if model.m() != model.n() {
        return Err(Error::NotSquare {
            rows: model.m(),
            cols: model.n(),
        });
    }
    newton_like(
        x0,
        options,
        StopRule::ResidualAndStep,
        |x| chain.modified_residual(model, x),
        |x| chain.iteration_matrix(model, x),
    )
}

fn rate_from_history(history: &[IterationRecord], root: &DVector<f64>) -> Result<RateFit> {
    let errors: Vec<f64> = history
        .iter()
        .map(|r| (DVector::from_column_slice(&r.x) - root).norm())
        .collect();
    fit_quadratic_rate(&errors)
}

/// Per-step ratios `e_{k+1} / e_k^2` from an error sequence.
pub fn fit_quadratic_rate(errors: &[f64]) -> Result<RateFit> {
    if errors.len() < 3 {
        return Err(Error::TooFewIterates {
            needed: 3,
            found: errors.len(),
        });
    }
    let ratios: Vec<f64> = errors
        .windows(2)
        .filter(|w| w[0] >= RATE_FLOOR)
        .map(|w| w[1] / (w[0] * w[0]))
        .collect();
    let constant = ratios.iter().copied().fold(0.0, f64::max);
    Ok(RateFit { ratios, constant })
}

/// Rate fit of a finished run against a known root.
pub fn convergence_ratio(report: &SolveReport, root: &DVector<f64>) -> Result<RateFit> {
    rate_from_history(&report.history, root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfactor::build_newton_chain;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn ex1() -> MappingModel {
        MappingModel::parse(&["x1+x2", "x1*x2"], &["x1", "x2"]).unwrap()
    }

    #[test]
    fn singular_start_is_reported() {
        let report = classical_newton(&ex1(), &v(&[0.3, 0.3]), &SolveOptions::default()).unwrap();
        assert_eq!(report.status, SolveStatus::SingularMatrix);
        assert_eq!(report.history.len(), 1);
        assert_eq!(report.iterations(), 0);
    }

    #[test]
    fn rejection_step() {
        let t = 1e-5;
        let opts = SolveOptions {
            max_iter: 1,
            ..SolveOptions::default()
        };
        let report = classical_newton(&ex1(), &v(&[t + t * t * t, t]), &opts).unwrap();
        assert_eq!(report.status, SolveStatus::MaxIterations);
        let x1 = &report.history[1].x;
        assert_relative_eq!(x1[0], -1.0 / t - t, max_relative = 1e-6);
        assert_relative_eq!(x1[1], 1.0 / t + t, max_relative = 1e-6);
    }

    #[test]
    fn affine_converges_in_one_step() {
        let m = MappingModel::parse(&["x - 1"], &["x"]).unwrap();
        let report = classical_newton(&m, &v(&[5.0]), &SolveOptions::default()).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert_eq!(report.iterations(), 1);
        assert_eq!(report.final_point, vec![1.0]);
    }

    #[test]
    fn two_factor_step_matches_closed_form() {
        let m = ex1();
        let chain = build_newton_chain(&m, &v(&[0.0, 0.0]), &v(&[1.0, -1.0]), 2, None).unwrap();
        let opts = SolveOptions {
            max_iter: 1,
            ..SolveOptions::default()
        };
        let x = v(&[0.04, -0.025]);
        let report = pfactor_newton(&m, &x, &chain, &opts).unwrap();
        let mat = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, x[1] - 1.0, x[0] + 1.0]);
        let expected = mat.lu().solve(&v(&[0.0, x[0] * x[1]])).unwrap();
        assert_relative_eq!(v(&report.history[1].x), expected, epsilon = 1e-16);
    }

    #[test]
    fn pfactor_converges_quadratically_on_ex1() {
        let m = ex1();
        let root = v(&[0.0, 0.0]);
        let chain = build_newton_chain(&m, &root, &v(&[1.0, -1.0]), 2, None).unwrap();
        let opts = SolveOptions::default().with_root(root.clone());
        let report = pfactor_newton(&m, &v(&[0.05, 0.03]), &chain, &opts).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert!(report.final_point.iter().all(|x| x.abs() < 1e-12));
        let rate = report.rate.unwrap();
        assert!(rate.constant < 10.0);
        // the iteration matrix at the root is the chain's factor matrix
        assert_eq!(chain.iteration_matrix(&m, &root).unwrap(), chain.factor_matrix);
    }

    #[test]
    fn degenerate_chain_reduces_to_newton() {
        let m = MappingModel::parse(&["2*x1 + x2 - 1", "x1 - x2"], &["x1", "x2"]).unwrap();
        let root = v(&[1.0 / 3.0, 1.0 / 3.0]);
        let chain = build_newton_chain(&m, &root, &v(&[1.0, 0.0]), 2, None).unwrap();
        let x0 = v(&[4.0, -2.0]);
        let a = pfactor_newton(&m, &x0, &chain, &SolveOptions::default()).unwrap();
        let b = classical_newton(&m, &x0, &SolveOptions::default()).unwrap();
        assert_eq!(a.history[1].x, b.history[1].x);
        assert_eq!(a.status, SolveStatus::Converged);
        assert_eq!(b.iterations(), 1);
    }

    #[test]
    fn rate_of_exact_quadratic_sequence() {
        let q: f64 = 0.5;
        let errors: Vec<f64> = (0..5).map(|k| q.powi(2i32.pow(k))).collect();
        let fit = fit_quadratic_rate(&errors).unwrap();
        assert!(!fit.ratios.is_empty());
        for r in &fit.ratios {
            assert_relative_eq!(*r, 1.0, epsilon = 1e-12);
        }
        assert!(matches!(
            fit_quadratic_rate(&errors[..2]),
            Err(Error::TooFewIterates { .. })
        ));
    }

    #[test]
    fn divergence_is_detected() {
        // Newton on x^2 + 1 wanders; a tiny limit forces the divergent status
        let m = MappingModel::parse(&["x^2 + 1"], &["x"]).unwrap();
        let opts = SolveOptions {
            divergence_limit: 10.0,
            max_iter: 200,
            ..SolveOptions::default()
        };
        let report = classical_newton(&m, &v(&[1e-3]), &opts).unwrap();
        assert_eq!(report.status, SolveStatus::Diverged);
    }
}
