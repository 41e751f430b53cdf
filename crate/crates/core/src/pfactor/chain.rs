//! Cumulative projector chain for the p-factor Newton scheme.
//!
//! Starting from `Y_1 = Im F'(x*)` and `Pbar_1 = P_{Y_1^perp}`, each further
//! image is
//!
//! ```text
//! Y_{k+1} = Im( F'(x*) + sum_{j=1..k} E_j(Pbar_1..Pbar_k) F^{(j+1)}(x*)[h]^j )
//! ```
//!
//! with `E_j` the sum of ordered products `Pbar_{i_j} .. Pbar_{i_1}` over
//! `i_j > .. > i_1`, and `Pbar_{k+1} = P_{Y_{k+1}^perp}`. The combined
//! projectors of the scheme are `P_j = E_j(Pbar_1..Pbar_{p-1})`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};
use crate::linalg::{self, Subspace};
use crate::mapping::MappingModel;
use crate::Error;

#[derive(Clone, Debug)]
pub struct NewtonChain {
    pub direction: DVector<f64>,
    pub order: usize,
    /// `Y_1..Y_{p-1}`.
    pub images: Vec<Subspace>,
    /// `Pbar_1..Pbar_{p-1}`.
    pub bar_projectors: Vec<DMatrix<f64>>,
    /// `P_1..P_{p-1}`.
    pub combined: Vec<DMatrix<f64>>,
    /// `F'(x*) + P_1 F''(x*)h + .. + P_{p-1} F^{(p)}(x*)[h]^{p-1}`.
    pub factor_matrix: DMatrix<f64>,
}

/// `E_1..E_q` for projectors `Pbar_1..Pbar_q`, where `E_j` sums the ordered
/// products of `j` distinct projectors with decreasing indices left to right.
pub fn ordered_products(bars: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let Some(first) = bars.first() else {
        return Vec::new();
    };
    let dim = first.nrows();
    // sums[j] accumulates E_j; sums[0] = I.
    let mut sums = vec![DMatrix::<f64>::zeros(dim, dim); bars.len() + 1];
    sums[0] = DMatrix::identity(dim, dim);
    for (i, bar) in bars.iter().enumerate() {
        for j in (1..=i + 1).rev() {
            let add = bar * &sums[j - 1];
            sums[j] += add;
        }
    }
    sums.remove(0);
    sums
}

fn chain_matrix(
    model: &MappingModel,
    x: &DVector<f64>,
    h: &DVector<f64>,
    combined: &[DMatrix<f64>],
) -> Result<DMatrix<f64>> {
    let mut total = model.jacobian(x)?;
    for (j, p) in combined.iter().enumerate() {
        total += p * model.form_matrix(j + 2, x, h)?;
    }
    Ok(total)
}

/// Builds the chain for order `p >= 2` along `h`, and checks that the
/// resulting p-factor matrix is nonsingular.
pub fn build_newton_chain(
    model: &MappingModel,
    x_star: &DVector<f64>,
    h: &DVector<f64>,
    p: usize,
    rank_tol: Option<f64>,
) -> Result<NewtonChain> {
    check_dim("base point", model.n(), x_star.len())?;
    check_dim("direction", model.n(), h.len())?;
    if h.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroDirection);
    }
    if p < 2 {
        return Err(Error::InvalidArgument("the Newton chain needs p >= 2".into()));
    }
    if p > model.p_max() {
        return Err(Error::OrderTooHigh {
            requested: p,
            max: model.p_max(),
        });
    }
    if model.m() != model.n() {
        return Err(Error::NotSquare {
            rows: model.m(),
            cols: model.n(),
        });
    }

    let jac = model.jacobian(x_star)?;
    let y1 = linalg::column_space(&jac, rank_tol);
    let mut bars = vec![linalg::orthoprojector(&y1, true).matrix().clone()];
    let mut images = vec![y1];
    while bars.len() < p - 1 {
        let partial = ordered_products(&bars);
        let m = chain_matrix(model, x_star, h, &partial)?;
        let image = linalg::column_space(&m, rank_tol);
        bars.push(linalg::orthoprojector(&image, true).matrix().clone());
        images.push(image);
    }
    let combined = ordered_products(&bars);
    let factor_matrix = chain_matrix(model, x_star, h, &combined)?;
    let rank = linalg::rank(&factor_matrix, rank_tol);
    if rank < model.n() {
        return Err(Error::SingularFactorMatrix {
            rank,
            dim: model.n(),
        });
    }
    Ok(NewtonChain {
        direction: h.clone(),
        order: p,
        images,
        bar_projectors: bars,
        combined,
        factor_matrix,
    })
}

impl NewtonChain {
    /// `F'(x) + sum_j P_j F^{(j+1)}(x)[h]^j`; the projectors stay frozen at `x*`.
    pub fn iteration_matrix(&self, model: &MappingModel, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        chain_matrix(model, x, &self.direction, &self.combined)
    }

    /// `F(x) + sum_j P_j F^{(j)}(x)[h]^j`.
    pub fn modified_residual(&self, model: &MappingModel, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut total = model.evaluate(x)?;
        for (j, p) in self.combined.iter().enumerate() {
            total += p * model.form_value(j + 1, x, &self.direction)?;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn mat(r: usize, c: usize, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, x)
    }

    #[test]
    fn ordered_products_of_three() {
        let a = mat(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = mat(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let c = mat(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let e = ordered_products(&[a.clone(), b.clone(), c.clone()]);
        assert_eq!(e[0], &a + &b + &c);
        assert_eq!(e[1], &b * &a + &c * &a + &c * &b);
        assert_eq!(e[2], &c * &b * &a);
    }

    #[test]
    fn ex1_two_factor_chain() {
        let m = MappingModel::parse(&["x1+x2", "x1*x2"], &["x1", "x2"]).unwrap();
        let chain = build_newton_chain(&m, &v(&[0.0, 0.0]), &v(&[1.0, -1.0]), 2, None).unwrap();
        assert_relative_eq!(chain.bar_projectors[0], mat(2, 2, &[0.0, 0.0, 0.0, 1.0]), epsilon = 1e-15);
        assert_relative_eq!(chain.factor_matrix, mat(2, 2, &[1.0, 1.0, -1.0, 1.0]), epsilon = 1e-15);
        let x = v(&[0.3, -0.2]);
        assert_relative_eq!(
            chain.iteration_matrix(&m, &x).unwrap(),
            mat(2, 2, &[1.0, 1.0, -0.2 - 1.0, 0.3 + 1.0]),
            epsilon = 1e-15
        );
        assert!(matches!(
            build_newton_chain(&m, &v(&[0.0, 0.0]), &v(&[1.0, 1.0]), 2, None),
            Err(Error::SingularFactorMatrix { rank: 1, dim: 2 })
        ));
    }

    #[test]
    fn phi3_three_factor_chain() {
        let m = MappingModel::parse(&["2*x1 + 2*x1*x2", "x1^2 + 4*x2^3"], &["x1", "x2"]).unwrap();
        let chain = build_newton_chain(&m, &v(&[0.0, 0.0]), &v(&[1.0, 1.0]), 3, None).unwrap();
        let tol = 1e-12;
        assert_relative_eq!(chain.bar_projectors[0], mat(2, 2, &[0.0, 0.0, 0.0, 1.0]), epsilon = tol);
        assert_relative_eq!(chain.bar_projectors[1], mat(2, 2, &[0.5, -0.5, -0.5, 0.5]), epsilon = tol);
        assert_relative_eq!(chain.combined[0], mat(2, 2, &[0.5, -0.5, -0.5, 1.5]), epsilon = tol);
        assert_relative_eq!(chain.combined[1], mat(2, 2, &[0.0, -0.5, 0.0, 0.5]), epsilon = tol);
        assert_relative_eq!(chain.factor_matrix, mat(2, 2, &[2.0, -11.0, 2.0, 11.0]), epsilon = tol);
        // x* is a root of the modified residual
        assert!(chain.modified_residual(&m, &v(&[0.0, 0.0])).unwrap().norm() < 1e-14);
    }

    #[test]
    fn regular_chain_degenerates() {
        let m = MappingModel::parse(&["x1 + x2^2", "x2 + x1*x2"], &["x1", "x2"]).unwrap();
        let chain = build_newton_chain(&m, &v(&[0.0, 0.0]), &v(&[0.6, 0.8]), 2, None).unwrap();
        assert_eq!(chain.bar_projectors[0], DMatrix::zeros(2, 2));
        assert_eq!(chain.factor_matrix, DMatrix::identity(2, 2));
    }

    #[test]
    fn argument_errors() {
        let m = MappingModel::parse(&["x1+x2", "x1*x2"], &["x1", "x2"]).unwrap();
        let z = v(&[0.0, 0.0]);
        assert_eq!(build_newton_chain(&m, &z, &z, 2, None).unwrap_err(), Error::ZeroDirection);
        assert!(build_newton_chain(&m, &z, &v(&[1.0, -1.0]), 1, None).is_err());
        let wide = MappingModel::parse(&["x1*x2"], &["x1", "x2"]).unwrap();
        assert!(matches!(
            build_newton_chain(&wide, &z, &v(&[1.0, 0.0]), 2, None),
            Err(Error::NotSquare { .. })
        ));
    }
}
