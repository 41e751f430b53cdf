//! A polynomial map together with lazily built, memoised derivative tensors.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};
use crate::expr::{parse_system, PolySystem, SymbolicDerivative, Tensor};
use crate::linalg::{self, Subspace};
use crate::Error;

/// Smooth map `F: R^n -> R^m` with exact derivatives up to order `p_max`.
///
/// Cloning is cheap; clones share the derivative cache.
#[derive(Clone, Debug)]
pub struct MappingModel {
    inner: Arc<Inner>,
}

#[derive(Debug)]
struct Inner {
    system: PolySystem,
    // index k holds the order-k derivative, k = 1..=p_max (slot 0 unused)
    derivatives: Vec<OnceLock<SymbolicDerivative>>,
}

/// Outcome of the singularity test at a point.
#[derive(Clone, Debug)]
pub struct Singularity {
    pub singular: bool,
    pub rank: usize,
    pub image: Subspace,
}

impl MappingModel {
    pub fn new(system: PolySystem) -> Self {
        let p_max = system.max_order();
        Self {
            inner: Arc::new(Inner {
                system,
                derivatives: (0..=p_max).map(|_| OnceLock::new()).collect(),
            }),
        }
    }

    pub fn parse<S: AsRef<str>>(equations: &[S], variables: &[&str]) -> Result<Self> {
        let names: Vec<String> = variables.iter().map(|s| s.to_string()).collect();
        Ok(Self::new(parse_system(equations, &names)?))
    }

    pub fn system(&self) -> &PolySystem {
        &self.inner.system
    }

    /// Domain dimension.
    pub fn n(&self) -> usize {
        self.inner.system.nvars()
    }

    /// Codomain dimension.
    pub fn m(&self) -> usize {
        self.inner.system.ncomponents()
    }

    pub fn p_max(&self) -> usize {
        self.inner.system.max_order()
    }

    fn symbolic(&self, order: usize) -> Result<&SymbolicDerivative> {
        if order == 0 || order > self.p_max() {
            return Err(Error::OrderTooHigh {
                requested: order,
                max: self.p_max(),
            });
        }
        if let Some(d) = self.inner.derivatives[order].get() {
            return Ok(d);
        }
        let built = if order == 1 {
            SymbolicDerivative::base(&self.inner.system).next()
        } else {
            self.symbolic(order - 1)?.next()
        };
        Ok(self.inner.derivatives[order].get_or_init(|| built))
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("point", self.n(), x.len())?;
        Ok(DVector::from_iterator(
            self.m(),
            self.inner.system.components().iter().map(|p| p.eval(x.as_slice())),
        ))
    }

    /// Per-component sum of absolute term values at `x`: the magnitude
    /// against which rounding in [`MappingModel::evaluate`] is measured.
    pub fn evaluation_scale(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("point", self.n(), x.len())?;
        Ok(DVector::from_iterator(
            self.m(),
            self.inner
                .system
                .components()
                .iter()
                .map(|p| p.abs_eval(x.as_slice())),
        ))
    }

    /// Full derivative tensor of order `k` at `x`.
    pub fn derivative(&self, order: usize, x: &DVector<f64>) -> Result<Tensor> {
        check_dim("point", self.n(), x.len())?;
        Ok(self.symbolic(order)?.eval(x.as_slice()))
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.derivative(1, x)?.to_matrix())
    }

    /// `F^{(k)}(x)[h]^copies`.
    pub fn contraction(
        &self,
        order: usize,
        x: &DVector<f64>,
        h: &DVector<f64>,
        copies: usize,
    ) -> Result<Tensor> {
        check_dim("direction", self.n(), h.len())?;
        if copies == 0 || copies > order {
            return Err(Error::InvalidArgument(format!(
                "cannot contract {copies} slots of an order-{order} tensor"
            )));
        }
        Ok(self.derivative(order, x)?.contract(h.as_slice(), copies))
    }

    /// `F^{(k)}(x)[h]^k` as a vector in `R^m`. Order 0 is `F(x)` itself.
    pub fn form_value(&self, order: usize, x: &DVector<f64>, h: &DVector<f64>) -> Result<DVector<f64>> {
        if order == 0 {
            return self.evaluate(x);
        }
        Ok(self.contraction(order, x, h, order)?.to_vector())
    }

    /// `F^{(k)}(x)[h]^{k-1}` as an `m x n` matrix.
    pub fn form_matrix(&self, order: usize, x: &DVector<f64>, h: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim("direction", self.n(), h.len())?;
        let t = self.derivative(order, x)?;
        Ok(t.contract(h.as_slice(), order - 1).to_matrix())
    }

    /// Rank test of `F'(x)` against surjectivity onto `R^m`.
    pub fn is_singular_at(&self, x: &DVector<f64>, tol: Option<f64>) -> Result<Singularity> {
        let j = self.jacobian(x)?;
        let image = linalg::column_space(&j, tol);
        let rank = image.dim();
        Ok(Singularity {
            singular: rank < self.m(),
            rank,
            image,
        })
    }
}
