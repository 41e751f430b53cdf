//! The direct-sum decomposition `R^m = Y_1 (+) .. (+) Y_p`, the p-factor
//! operator built from it, and the regularity tests that depend on it.
//!
//! `Y_1` is the image of `F'(x*)`. Each later block `Y_i` is the span of the
//! image of the homogeneous form `P_{Z_i} F^{(i)}(x*)[.]^i`, where `Z_i` is
//! the orthogonal complement of `Y_1 (+) .. (+) Y_{i-1}`. That span is found
//! by evaluating the form on a seeded set of directions and taking the
//! column space of the results. `p` is the first order at which the blocks
//! exhaust `R^m`.

mod chain;
mod cone;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::expr::Tensor;
use crate::linalg::{self, Projector, RightInverseNorm, Subspace};
use crate::mapping::MappingModel;
use crate::sampling;
use crate::Error;

pub use chain::{build_newton_chain, ordered_products, NewtonChain};
pub use cone::{ConeSampleSpec, StrongRegularity};

/// Tolerances and seeds shared by the constructions in this module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PFactorConfig {
    /// Absolute singular-value cutoff; `None` selects the relative default.
    pub rank_tol: Option<f64>,
    /// Tolerance for `||F_k^{(k)}(x*)[h]^k|| <= tol * ||h||^k`.
    pub kernel_tol: f64,
    /// Seed for the direction samples used to span the blocks.
    pub seed: u64,
    /// Number of sample directions per block; `None` means `max(3 n m, 64)`.
    pub span_samples: Option<usize>,
}

impl Default for PFactorConfig {
    fn default() -> Self {
        Self {
            rank_tol: None,
            kernel_tol: 1e-8,
            seed: 0x5eed,
            span_samples: None,
        }
    }
}

/// Blocks `Y_1..Y_p` with their orthoprojectors and the derivative tensors
/// of `F` at the base point.
#[derive(Clone, Debug)]
pub struct Decomposition {
    model: MappingModel,
    base_point: DVector<f64>,
    blocks: Vec<Subspace>,
    projectors: Vec<Projector>,
    // forms[i] = F^{(i+1)}(x*)
    forms: Vec<Tensor>,
    config: PFactorConfig,
}

/// `Psi_p(h)` and its diagnostics.
#[derive(Clone, Debug)]
pub struct FactorOperator {
    pub direction: DVector<f64>,
    pub matrix: DMatrix<f64>,
    /// `P_{Y_i} F^{(i)}(x*)[h]^{i-1}` for `i = 1..=p`.
    pub terms: Vec<DMatrix<f64>>,
    pub rank: usize,
    pub surjective: bool,
    pub right_inverse_norm: RightInverseNorm,
}

/// Result of the p-regularity test along a direction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityCheck {
    pub regular: bool,
    pub rank: usize,
    pub remark: Option<RemarkCheck>,
}

/// The equivalent test through `Ker Psi_{p-1}(h)`: the image of the last
/// term restricted to that kernel must be all of `Y_p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RemarkCheck {
    pub holds: bool,
    pub kernel_dim: usize,
    pub restricted_rank: usize,
    pub agrees: bool,
}

/// Builds the decomposition at `x_star`, trying orders up to `p_cap`.
pub fn build_decomposition(
    model: &MappingModel,
    x_star: &DVector<f64>,
    p_cap: usize,
    config: &PFactorConfig,
) -> Result<Decomposition> {
    check_dim("base point", model.n(), x_star.len())?;
    if p_cap == 0 {
        return Err(Error::InvalidArgument("p_cap must be at least 1".into()));
    }
    if p_cap > model.p_max() {
        return Err(Error::OrderTooHigh {
            requested: p_cap,
            max: model.p_max(),
        });
    }
    let m = model.m();
    let n = model.n();
    let samples = config.span_samples.unwrap_or((3 * n * m).max(64));

    let jac = model.jacobian(x_star)?;
    let y1 = linalg::column_space(&jac, config.rank_tol);
    let mut covered = y1.clone();
    let mut blocks = vec![y1];
    let mut forms = vec![model.derivative(1, x_star)?];

    let mut order = 1;
    while covered.dim() < m {
        if order == p_cap {
            return Err(Error::DecompositionIncomplete {
                p_cap,
                block_dims: blocks.iter().map(Subspace::dim).collect(),
                achieved: covered.dim(),
                target: m,
            });
        }
        order += 1;
        let tensor = model.derivative(order, x_star)?;
        let complement = covered.complement();
        let z_proj = complement.projector_matrix();

        let mut rng = sampling::rng(config.seed ^ (order as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut values = DMatrix::zeros(m, samples);
        for s in 0..samples {
            let h = sampling::unit_vector(&mut rng, n);
            let v = tensor.contract(h.as_slice(), order).to_vector();
            values.set_column(s, &v);
        }
        // Judge the projected rank against the unprojected magnitude so that
        // rounding residue left after projection is not mistaken for a direction.
        let scale = linalg::singular_values(&values).first().copied().unwrap_or(0.0);
        let tol = config
            .rank_tol
            .unwrap_or_else(|| 16.0 * linalg::default_tolerance(m, samples, scale));
        let block = linalg::column_space(&(&z_proj * &values), Some(tol));
        covered = covered.join(&block, None);
        blocks.push(block);
        forms.push(tensor);
    }

    let projectors = blocks
        .iter()
        .map(|b| linalg::orthoprojector(b, false))
        .collect();
    Ok(Decomposition {
        model: model.clone(),
        base_point: x_star.clone(),
        blocks,
        projectors,
        forms,
        config: config.clone(),
    })
}

impl Decomposition {
    /// The order `p`.
    pub fn order(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Subspace] {
        &self.blocks
    }

    pub fn projectors(&self) -> &[Projector] {
        &self.projectors
    }

    pub fn base_point(&self) -> &DVector<f64> {
        &self.base_point
    }

    pub fn model(&self) -> &MappingModel {
        &self.model
    }

    pub fn config(&self) -> &PFactorConfig {
        &self.config
    }

    /// `F^{(k)}(x*)` for `k = 1..=p`.
    pub fn form_tensor(&self, k: usize) -> &Tensor {
        &self.forms[k - 1]
    }

    fn projector(&self, k: usize) -> &DMatrix<f64> {
        self.projectors[k - 1].matrix()
    }

    /// `F_k(x) = P_{Y_k} F(x)`.
    pub fn banded_value(&self, k: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.projector(k) * self.model.evaluate(x)?)
    }

    /// `F_k^{(k)}(x*)[h]^k`.
    pub fn banded_form(&self, k: usize, h: &DVector<f64>) -> DVector<f64> {
        self.projector(k) * self.form_tensor(k).contract(h.as_slice(), k).to_vector()
    }

    /// `F_k^{(k)}(x*)[h]^{k-1}`.
    pub fn banded_form_matrix(&self, k: usize, h: &DVector<f64>) -> DMatrix<f64> {
        self.projector(k) * self.form_tensor(k).contract(h.as_slice(), k - 1).to_matrix()
    }

    /// `Psi_q(h) = sum_{i <= q} F_i^{(i)}(x*)[h]^{i-1}`; the zero map for `q = 0`.
    pub fn partial_operator(&self, q: usize, h: &DVector<f64>) -> DMatrix<f64> {
        (1..=q).fold(DMatrix::zeros(self.model.m(), self.model.n()), |acc, k| {
            acc + self.banded_form_matrix(k, h)
        })
    }

    fn check_direction(&self, h: &DVector<f64>) -> Result<()> {
        check_dim("direction", self.model.n(), h.len())?;
        if h.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroDirection);
        }
        Ok(())
    }

    /// Assembles `Psi_p(h)`.
    pub fn factor_operator(&self, h: &DVector<f64>) -> Result<FactorOperator> {
        self.check_direction(h)?;
        let terms: Vec<DMatrix<f64>> = (1..=self.order())
            .map(|k| self.banded_form_matrix(k, h))
            .collect();
        let matrix = terms
            .iter()
            .fold(DMatrix::zeros(self.model.m(), self.model.n()), |acc, t| acc + t);
        let rank = linalg::rank(&matrix, self.config.rank_tol);
        let surjective = rank == self.model.m();
        let right_inverse_norm = linalg::right_inverse_norm(&matrix, self.config.rank_tol);
        Ok(FactorOperator {
            direction: h.clone(),
            matrix,
            terms,
            rank,
            surjective,
            right_inverse_norm,
        })
    }

    /// Surjectivity of `Psi_p(h)`, optionally cross-checked through the
    /// kernel of `Psi_{p-1}(h)`.
    pub fn is_p_regular_along(&self, h: &DVector<f64>, cross_check: bool) -> Result<RegularityCheck> {
        let op = self.factor_operator(h)?;
        let remark = cross_check.then(|| {
            let p = self.order();
            let kernel = linalg::null_space(&self.partial_operator(p - 1, h), self.config.rank_tol);
            let last = self.banded_form_matrix(p, h);
            let restricted = &last * kernel.basis();
            // judge the restriction against the size of the whole term
            let scale = linalg::singular_values(&last).first().copied().unwrap_or(0.0);
            let tol = self
                .config
                .rank_tol
                .unwrap_or_else(|| linalg::default_tolerance(last.nrows(), last.ncols(), scale));
            let restricted_rank = linalg::rank(&restricted, Some(tol));
            let holds = restricted_rank == self.blocks[p - 1].dim();
            RemarkCheck {
                holds,
                kernel_dim: kernel.dim(),
                restricted_rank,
                agrees: holds == op.surjective,
            }
        });
        Ok(RegularityCheck {
            regular: op.surjective,
            rank: op.rank,
            remark,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn ex1() -> MappingModel {
        MappingModel::parse(&["x1+x2", "x1*x2"], &["x1", "x2"]).unwrap()
    }

    fn eq20a() -> MappingModel {
        MappingModel::parse(
            &["x1^2 - x2^2 + x3^2", "x1^2 - x2^2 + x3^2 + x2*x3"],
            &["x1", "x2", "x3"],
        )
        .unwrap()
    }

    fn decompose(m: &MappingModel, p_cap: usize) -> Decomposition {
        build_decomposition(m, &DVector::zeros(m.n()), p_cap, &PFactorConfig::default()).unwrap()
    }

    #[test]
    fn ex1_decomposition() {
        let d = decompose(&ex1(), 2);
        assert_eq!(d.order(), 2);
        let y1 = d.blocks()[0].basis();
        let y2 = d.blocks()[1].basis();
        assert_relative_eq!(y1[(0, 0)].abs(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(y1[(1, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(y2[(0, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(y2[(1, 0)].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eq20a_decomposition() {
        let d = decompose(&eq20a(), 2);
        assert_eq!(d.order(), 2);
        assert_eq!(d.blocks()[0].dim(), 0);
        assert_eq!(d.blocks()[1].dim(), 2);
    }

    #[test]
    fn regular_decomposition() {
        let m = MappingModel::parse(&["x1 + x1*x2", "x2 - x1^2"], &["x1", "x2"]).unwrap();
        let d = decompose(&m, 3);
        assert_eq!(d.order(), 1);
        assert_eq!(d.blocks()[0].dim(), 2);
    }

    #[test]
    fn incomplete_decomposition() {
        let m = MappingModel::parse(&["x1^3", "x2^3"], &["x1", "x2"]).unwrap();
        let err = build_decomposition(&m, &v(&[0.0, 0.0]), 2, &PFactorConfig::default()).unwrap_err();
        assert_eq!(
            err,
            Error::DecompositionIncomplete {
                p_cap: 2,
                block_dims: vec![0, 0],
                achieved: 0,
                target: 2
            }
        );
        assert_eq!(decompose(&m, 3).order(), 3);
        assert!(matches!(
            build_decomposition(&m, &v(&[0.0, 0.0]), 5, &PFactorConfig::default()),
            Err(Error::OrderTooHigh { .. })
        ));
    }

    #[test]
    fn factor_operator_examples() {
        let d = decompose(&ex1(), 2);
        let op = d.factor_operator(&v(&[1.0, -1.0])).unwrap();
        assert_relative_eq!(op.matrix, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 1.0]), epsilon = 1e-12);
        assert!(op.surjective);
        let op = d.factor_operator(&v(&[1.0, 1.0])).unwrap();
        assert_relative_eq!(op.matrix, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]), epsilon = 1e-12);
        assert_eq!(op.rank, 1);
        assert!(!op.surjective);
        assert_eq!(op.right_inverse_norm, RightInverseNorm::Unbounded);
        assert_eq!(d.factor_operator(&v(&[0.0, 0.0])).unwrap_err(), Error::ZeroDirection);

        let d = decompose(&eq20a(), 2);
        let op = d.factor_operator(&v(&[1.0, 1.0, 0.0])).unwrap();
        assert_eq!(op.rank, 2);
        assert!(op.surjective);
    }

    #[test]
    fn regularity_with_cross_check() {
        let d = decompose(&ex1(), 2);
        let r = d.is_p_regular_along(&v(&[1.0, -1.0]), true).unwrap();
        assert!(r.regular);
        assert!(r.remark.as_ref().unwrap().agrees);
        let r = d.is_p_regular_along(&v(&[1.0, 1.0]), true).unwrap();
        assert!(!r.regular);
        let remark = r.remark.unwrap();
        assert!(!remark.holds && remark.agrees, "{remark:?}");
        assert_eq!(remark.kernel_dim, 1);

        let d = decompose(&eq20a(), 2);
        let r = d.is_p_regular_along(&v(&[1.0, 1.0, 0.0]), true).unwrap();
        assert!(r.regular && r.remark.unwrap().agrees);
    }

    #[test]
    fn banded_values_split_f() {
        let m = ex1();
        let d = decompose(&m, 2);
        let x = v(&[0.3, -0.8]);
        let total = d.banded_value(1, &x).unwrap() + d.banded_value(2, &x).unwrap();
        assert_relative_eq!(total, m.evaluate(&x).unwrap(), epsilon = 1e-15);
    }
}
