//! p-factor Lagrange conditions for `min phi(x)` subject to `F(x) = 0`.
//!
//! For a direction `h` the p-factor Lagrange function is
//!
//! ```text
//! L_p(x, l, h)    = phi(x) + < sum_k          F_k^{(k-1)}(x)[h]^{k-1}, l >
//! Lbar_p(x, l, h) = phi(x) + < sum_k 2/(k(k+1)) F_k^{(k-1)}(x)[h]^{k-1}, l >
//! ```
//!
//! with `F_k = P_{Y_k} F`. The first-order condition `d/dx L_p = 0` reads
//! `phi'(x*) + Psi_p(h)^T l = 0`; the second-order test is
//! `Lbar_p''[h]^2 >= alpha ||h||^2` over `H_p(x*)`.
//!
//! Both quantities are computed twice: from the derivative tensors held by
//! the decomposition, and from the Lagrange function assembled symbolically
//! as a polynomial. The certificates record the discrepancy.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, Result};
use crate::expr::Polynomial;
use crate::linalg;
use crate::mapping::MappingModel;
use crate::pfactor::{ConeSampleSpec, Decomposition};
use crate::sampling;
use crate::Error;

/// `min phi(x)` subject to `F(x) = 0`, with a candidate minimiser.
///
/// `constraints == None` is the unconstrained problem.
#[derive(Clone, Debug)]
pub struct EqualityProblem {
    objective: MappingModel,
    constraints: Option<MappingModel>,
    point: DVector<f64>,
}

impl EqualityProblem {
    pub fn new(
        objective: MappingModel,
        constraints: Option<MappingModel>,
        point: DVector<f64>,
        feasibility_tol: f64,
    ) -> Result<Self> {
        check_dim("objective components", 1, objective.m())?;
        check_dim("candidate point", objective.n(), point.len())?;
        if let Some(c) = &constraints {
            check_dim("constraint variables", objective.n(), c.n())?;
            let violation = c.evaluate(&point)?.norm();
            if violation > feasibility_tol {
                return Err(Error::Infeasible {
                    what: "the equality constraints",
                    violation,
                });
            }
        }
        Ok(Self {
            objective,
            constraints,
            point,
        })
    }

    pub fn objective(&self) -> &MappingModel {
        &self.objective
    }

    pub fn constraints(&self) -> Option<&MappingModel> {
        self.constraints.as_ref()
    }

    pub fn point(&self) -> &DVector<f64> {
        &self.point
    }

    pub fn n(&self) -> usize {
        self.objective.n()
    }

    /// Number of constraints.
    pub fn m(&self) -> usize {
        self.constraints.as_ref().map_or(0, MappingModel::m)
    }

    pub fn objective_gradient(&self) -> Result<DVector<f64>> {
        Ok(self.objective.jacobian(&self.point)?.row(0).transpose())
    }

    /// Least-squares classical multiplier for `phi'(x*) + F'(x*)^T l = 0`,
    /// with the residual left over.
    pub fn classical_multiplier(&self) -> Result<(DVector<f64>, f64)> {
        let grad = self.objective_gradient()?;
        let Some(c) = &self.constraints else {
            return Ok((DVector::zeros(0), grad.norm()));
        };
        let jt = c.jacobian(&self.point)?.transpose();
        let (l, residual) = linalg::least_squares(&jt, &(-&grad), None);
        Ok((l, residual))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecondOrder {
    /// `Lbar_p''(x*, l(h), h)[h]^2`.
    pub value: f64,
    /// `value / ||h||^2`.
    pub normalized: f64,
    pub sufficient: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LagrangeCertificate {
    pub direction: Vec<f64>,
    /// `max_k ||F_k^{(k)}[h]^k|| / ||h||^k`; zero without constraints.
    pub hp_residual: f64,
    pub in_hp: bool,
    pub regular: bool,
    /// Minimal-norm `l(h)`.
    pub multiplier: Vec<f64>,
    /// `P_{Y_k} l` for each block.
    pub block_multipliers: Vec<Vec<f64>>,
    /// `||phi'(x*) + Psi_p(h)^T l||`.
    pub first_order_residual: f64,
    /// Difference between the tensor and symbolic gradients of `L_p` at `x*`.
    pub path_discrepancy: f64,
    pub necessary: bool,
    pub second_order: Option<SecondOrder>,
}

/// Weighting of the constraint bands in the Lagrange function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    /// `L_p`: every band has weight 1.
    Plain,
    /// `Lbar_p`: band `k` has weight `2/(k(k+1))`.
    Averaged,
}

impl Weighting {
    pub fn weight(self, k: usize) -> f64 {
        match self {
            Weighting::Plain => 1.0,
            Weighting::Averaged => 2.0 / (k * (k + 1)) as f64,
        }
    }
}

fn constrained<'a>(
    problem: &'a EqualityProblem,
    decomposition: Option<&'a Decomposition>,
) -> Result<Option<(&'a MappingModel, &'a Decomposition)>> {
    match (problem.constraints(), decomposition) {
        (None, _) => Ok(None),
        (Some(c), Some(d)) => {
            check_dim("decomposition components", c.m(), d.model().m())?;
            check_dim("decomposition variables", c.n(), d.model().n())?;
            Ok(Some((c, d)))
        }
        (Some(_), None) => Err(Error::InvalidArgument(
            "a constrained problem needs the constraint decomposition".into(),
        )),
    }
}

/// The Lagrange function as a polynomial in `x`.
pub fn lagrangian_polynomial(
    problem: &EqualityProblem,
    decomposition: Option<&Decomposition>,
    h: &DVector<f64>,
    multiplier: &DVector<f64>,
    weighting: Weighting,
) -> Result<Polynomial> {
    check_dim("direction", problem.n(), h.len())?;
    let mut total = problem.objective.system().components()[0].clone();
    let Some((c, d)) = constrained(problem, decomposition)? else {
        return Ok(total);
    };
    check_dim("multiplier", c.m(), multiplier.len())?;
    // derivs[j] = F_j^{(k-1)}(x)[h]^{k-1} as we step k upward
    let mut derivs: Vec<Polynomial> = c.system().components().to_vec();
    for k in 1..=d.order() {
        let weighted = d.projectors()[k - 1].matrix() * multiplier * weighting.weight(k);
        for (poly, &coef) in derivs.iter().zip(weighted.iter()) {
            if coef != 0.0 {
                total = total.add(&poly.scale(coef));
            }
        }
        derivs = derivs.iter().map(|p| p.directional(h.as_slice())).collect();
    }
    Ok(total)
}

/// Minimal-norm `l(h)` solving `Psi_p(h)^T l = -phi'(x*)`.
pub fn solve_multiplier(
    problem: &EqualityProblem,
    decomposition: Option<&Decomposition>,
    h: &DVector<f64>,
    tol: f64,
) -> Result<LagrangeCertificate> {
    check_dim("direction", problem.n(), h.len())?;
    if h.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroDirection);
    }
    let grad = problem.objective_gradient()?;
    let x = problem.point();

    let (multiplier, residual, hp_residual, in_hp, regular, blocks) =
        match constrained(problem, decomposition)? {
            None => (DVector::zeros(0), grad.norm(), 0.0, true, true, Vec::new()),
            Some((_, d)) => {
                let psi = d.factor_operator(h)?;
                let (l, residual) = linalg::least_squares(&psi.matrix.transpose(), &(-&grad), d.config().rank_tol);
                let blocks = d
                    .projectors()
                    .iter()
                    .map(|p| (p.matrix() * &l).iter().copied().collect())
                    .collect();
                let hp = d.hp_residual(h);
                (l, residual, hp, hp <= d.config().kernel_tol, psi.surjective, blocks)
            }
        };

    let lagrangian = lagrangian_polynomial(problem, decomposition, h, &multiplier, Weighting::Plain)?;
    let symbolic = DVector::from_iterator(
        problem.n(),
        lagrangian.gradient().iter().map(|g| g.eval(x.as_slice())),
    );
    let tensor_path = match constrained(problem, decomposition)? {
        None => grad.clone(),
        Some((_, d)) => &grad + d.factor_operator(h)?.matrix.transpose() * &multiplier,
    };

    Ok(LagrangeCertificate {
        direction: h.iter().copied().collect(),
        hp_residual,
        in_hp,
        regular,
        multiplier: multiplier.iter().copied().collect(),
        block_multipliers: blocks,
        first_order_residual: residual,
        path_discrepancy: (symbolic - tensor_path).norm(),
        necessary: residual <= tol,
        second_order: None,
    })
}

/// `Lbar_p''(x*, l(h), h)[h]^2` from the derivative tensors:
/// `phi''[h]^2 + sum_k 2/(k(k+1)) < P_k F^{(k+1)}(x*)[h]^{k+1}, l >`.
pub fn second_order_value_tensor(
    problem: &EqualityProblem,
    decomposition: Option<&Decomposition>,
    h: &DVector<f64>,
    multiplier: &DVector<f64>,
) -> Result<f64> {
    let x = problem.point();
    let mut value = problem.objective.form_value(2, x, h)?[0];
    if let Some((c, d)) = constrained(problem, decomposition)? {
        for k in 1..=d.order() {
            let form = c.form_value(k + 1, x, h)?;
            let projected = d.projectors()[k - 1].matrix() * form;
            value += Weighting::Averaged.weight(k) * projected.dot(multiplier);
        }
    }
    Ok(value)
}

/// Fills in the second-order part of `cert`: sufficient when
/// `Lbar_p''[h]^2 >= alpha_floor ||h||^2`.
pub fn second_order_check(
    problem: &EqualityProblem,
    decomposition: Option<&Decomposition>,
    cert: &LagrangeCertificate,
    alpha_floor: f64,
) -> Result<LagrangeCertificate> {
    let h = DVector::from_column_slice(&cert.direction);
    let l = DVector::from_column_slice(&cert.multiplier);
    let lbar = lagrangian_polynomial(problem, decomposition, &h, &l, Weighting::Averaged)?;
    let value = lbar
        .directional(h.as_slice())
        .directional(h.as_slice())
        .eval(problem.point().as_slice());
    let normalized = value / h.norm_squared();
    let mut out = cert.clone();
    out.second_order = Some(SecondOrder {
        value,
        normalized,
        sufficient: normalized >= alpha_floor,
    });
    Ok(out)
}

/// Multiplier solve followed by the second-order test.
pub fn certify_direction(
    problem: &EqualityProblem,
    decomposition: Option<&Decomposition>,
    h: &DVector<f64>,
    options: &CertifyOptions,
) -> Result<LagrangeCertificate> {
    let cert = solve_multiplier(problem, decomposition, h, options.tol)?;
    second_order_check(problem, decomposition, &cert, options.alpha_floor)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// No direction in `H_p`: the conditions say nothing.
    Vacuous,
    FailsNecessary,
    NecessaryOnly,
    /// Necessary and sufficient conditions hold at every sampled direction.
    NecessaryAndSufficient,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertifyOptions {
    /// First-order residual tolerance.
    pub tol: f64,
    /// Required `Lbar_p''[h]^2 / ||h||^2`.
    pub alpha_floor: f64,
    pub cone: ConeSampleSpec,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            alpha_floor: 1e-8,
            cone: ConeSampleSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimalityReport {
    pub verdict: Verdict,
    /// Sufficiency is established on sampled directions only.
    pub sampled: bool,
    /// Smallest `Lbar_p''[h]^2 / ||h||^2` over the certificates.
    pub alpha_estimate: Option<f64>,
    pub classical_residual: f64,
    pub certificates: Vec<LagrangeCertificate>,
}

/// Certificates over sampled directions of `H_p(x*)`, or over sampled unit
/// directions for an unconstrained problem.
pub fn certify(
    problem: &EqualityProblem,
    decomposition: Option<&Decomposition>,
    options: &CertifyOptions,
) -> Result<OptimalityReport> {
    let directions = match constrained(problem, decomposition)? {
        Some((_, d)) => d.hp_sample(&options.cone),
        None => {
            let mut rng = sampling::rng(options.cone.seed);
            (0..options.cone.budget)
                .map(|_| sampling::unit_vector(&mut rng, problem.n()))
                .collect()
        }
    };
    let certificates = directions
        .iter()
        .map(|h| certify_direction(problem, decomposition, h, options))
        .collect::<Result<Vec<_>>>()?;
    summarize(problem, certificates)
}

/// Aggregates certificates into a verdict.
pub fn summarize(problem: &EqualityProblem, certificates: Vec<LagrangeCertificate>) -> Result<OptimalityReport> {
    let (_, classical_residual) = problem.classical_multiplier()?;
    let alpha_estimate = certificates
        .iter()
        .filter_map(|c| c.second_order.as_ref().map(|s| s.normalized))
        .reduce(f64::min);
    let verdict = if certificates.is_empty() {
        Verdict::Vacuous
    } else if certificates.iter().any(|c| !c.necessary) {
        Verdict::FailsNecessary
    } else if certificates
        .iter()
        .all(|c| c.second_order.as_ref().is_some_and(|s| s.sufficient))
    {
        Verdict::NecessaryAndSufficient
    } else {
        Verdict::NecessaryOnly
    };
    Ok(OptimalityReport {
        verdict,
        sampled: true,
        alpha_estimate,
        classical_residual,
        certificates,
    })
}

/// `Psi_p(h)` for the problem's constraints, `0 x n` without constraints.
pub fn factor_matrix(
    problem: &EqualityProblem,
    decomposition: Option<&Decomposition>,
    h: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    match constrained(problem, decomposition)? {
        None => Ok(DMatrix::zeros(0, problem.n())),
        Some((_, d)) => Ok(d.factor_operator(h)?.matrix),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfactor::{build_decomposition, PFactorConfig};
    use approx::assert_relative_eq;

    const VARS: [&str; 3] = ["x1", "x2", "x3"];

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn eq20a(objective: &str) -> (EqualityProblem, Decomposition) {
        let phi = MappingModel::parse(&[objective], &VARS).unwrap();
        let f = MappingModel::parse(
            &["x1^2 - x2^2 + x3^2", "x1^2 - x2^2 + x3^2 + x2*x3"],
            &VARS,
        )
        .unwrap();
        let x = DVector::zeros(3);
        let d = build_decomposition(&f, &x, 2, &PFactorConfig::default()).unwrap();
        (EqualityProblem::new(phi, Some(f), x, 1e-10).unwrap(), d)
    }

    #[test]
    fn eq20a_multipliers() {
        let (p, d) = eq20a("x2^2 + x3");
        let cert = solve_multiplier(&p, Some(&d), &v(&[1.0, 1.0, 0.0]), 1e-10).unwrap();
        assert!(cert.in_hp && cert.regular && cert.necessary);
        assert_relative_eq!(v(&cert.multiplier), v(&[1.0, -1.0]), epsilon = 1e-12);
        assert_relative_eq!(v(&cert.block_multipliers[0]), v(&[0.0, 0.0]), epsilon = 1e-12);
        assert_relative_eq!(v(&cert.block_multipliers[1]), v(&[1.0, -1.0]), epsilon = 1e-12);
        assert!(cert.first_order_residual <= 1e-10);
        assert!(cert.path_discrepancy <= 1e-12);

        let cert = solve_multiplier(&p, Some(&d), &v(&[1.0, -1.0, 0.0]), 1e-10).unwrap();
        assert_relative_eq!(v(&cert.multiplier), v(&[-1.0, 1.0]), epsilon = 1e-12);
    }

    #[test]
    fn eq20a_second_order() {
        let (p, d) = eq20a("x2^2 + x3");
        let h = v(&[1.0, 1.0, 0.0]);
        let cert = certify_direction(&p, Some(&d), &h, &CertifyOptions::default()).unwrap();
        let so = cert.second_order.unwrap();
        // phi''[h]^2 = 2 h2^2; the constraint terms are linear in x
        assert_relative_eq!(so.value, 2.0, epsilon = 1e-12);
        assert!(so.sufficient);
        let l = v(&cert.multiplier);
        assert_relative_eq!(second_order_value_tensor(&p, Some(&d), &h, &l).unwrap(), so.value, epsilon = 1e-12);

        let h2 = &h * 2.0;
        let cert2 = certify_direction(&p, Some(&d), &h2, &CertifyOptions::default()).unwrap();
        assert_relative_eq!(cert2.second_order.unwrap().normalized, so.normalized, epsilon = 1e-12);
    }

    #[test]
    fn eq20a_verdicts() {
        let (p, d) = eq20a("x2^2 + x3");
        let report = certify(&p, Some(&d), &CertifyOptions::default()).unwrap();
        assert_eq!(report.verdict, Verdict::NecessaryAndSufficient);
        assert_eq!(report.certificates.len(), 4);
        assert_relative_eq!(report.classical_residual, 1.0, epsilon = 1e-12);

        let (p, d) = eq20a("-x2^2 - x3");
        let report = certify(&p, Some(&d), &CertifyOptions::default()).unwrap();
        assert_eq!(report.verdict, Verdict::NecessaryOnly);
        assert!(report.alpha_estimate.unwrap() < 0.0);
    }

    #[test]
    fn empty_cone_is_vacuous() {
        let phi = MappingModel::parse(&["x1^2 + x2^2"], &["x1", "x2"]).unwrap();
        let f = MappingModel::parse(&["x1+x2", "x1*x2"], &["x1", "x2"]).unwrap();
        let x = DVector::zeros(2);
        let d = build_decomposition(&f, &x, 2, &PFactorConfig::default()).unwrap();
        let p = EqualityProblem::new(phi, Some(f), x, 1e-10).unwrap();
        let report = certify(&p, Some(&d), &CertifyOptions::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Vacuous);
        assert!(report.certificates.is_empty());
    }

    #[test]
    fn regular_problem_matches_classical() {
        let phi = MappingModel::parse(&["x1^2 + 2*x2^2 + x1"], &["x1", "x2"]).unwrap();
        let f = MappingModel::parse(&["x1 + x2"], &["x1", "x2"]).unwrap();
        // reduced objective 3 x1^2 + x1 is minimal at x1 = -1/6
        let x = v(&[-1.0 / 6.0, 1.0 / 6.0]);
        let d = build_decomposition(&f, &x, 1, &PFactorConfig::default()).unwrap();
        let p = EqualityProblem::new(phi, Some(f), x, 1e-12).unwrap();
        let (classical, residual) = p.classical_multiplier().unwrap();
        assert!(residual < 1e-12);
        let cert = solve_multiplier(&p, Some(&d), &v(&[1.0, -1.0]), 1e-10).unwrap();
        assert_relative_eq!(v(&cert.multiplier), classical, epsilon = 1e-12);
        assert_relative_eq!(cert.multiplier[0], -2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn unconstrained_quadratic() {
        let phi = MappingModel::parse(&["x1^2 + x2^2"], &["x1", "x2"]).unwrap();
        let p = EqualityProblem::new(phi, None, DVector::zeros(2), 0.0).unwrap();
        for h in [v(&[1.0, 0.0]), v(&[0.3, -2.0])] {
            let cert = certify_direction(&p, None, &h, &CertifyOptions::default()).unwrap();
            assert_relative_eq!(cert.second_order.unwrap().value, 2.0 * h.norm_squared(), epsilon = 1e-12);
        }
        let report = certify(&p, None, &CertifyOptions::default()).unwrap();
        assert_eq!(report.verdict, Verdict::NecessaryAndSufficient);
    }

    #[test]
    fn infeasible_candidate_rejected() {
        let phi = MappingModel::parse(&["x"], &["x"]).unwrap();
        let f = MappingModel::parse(&["x - 1"], &["x"]).unwrap();
        assert!(matches!(
            EqualityProblem::new(phi, Some(f), v(&[0.0]), 1e-10),
            Err(Error::Infeasible { .. })
        ));
    }
}
