//! Dense linear algebra with explicit rank decisions.
//!
//! Every rank-revealing routine takes an optional absolute tolerance on
//! singular values. When absent the default cutoff
//! `max(rows, cols) * eps * sigma_max` is used.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Orthonormal basis of a subspace of `R^ambient`.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    /// Wraps a basis whose columns are already orthonormal.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Self {
        Self { basis }
    }

    pub fn zero(ambient: usize) -> Self {
        Self {
            basis: DMatrix::zeros(ambient, 0),
        }
    }

    pub fn full(ambient: usize) -> Self {
        Self {
            basis: DMatrix::identity(ambient, ambient),
        }
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// `B * B^T`.
    pub fn projector_matrix(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    pub fn complement(&self) -> Subspace {
        let n = self.ambient();
        if self.dim() == 0 {
            return Subspace::full(n);
        }
        if self.dim() == n {
            return Subspace::zero(n);
        }
        let residual = DMatrix::identity(n, n) - self.projector_matrix();
        // The residual projector has singular values 1 (complement) and ~0.
        column_space(&residual, Some(0.5))
    }

    /// Sum of two subspaces.
    pub fn join(&self, other: &Subspace, tol: Option<f64>) -> Subspace {
        let mut cols = DMatrix::zeros(self.ambient(), self.dim() + other.dim());
        cols.columns_mut(0, self.dim()).copy_from(&self.basis);
        cols.columns_mut(self.dim(), other.dim())
            .copy_from(&other.basis);
        column_space(&cols, tol)
    }

    /// Distance from `v` to the subspace.
    pub fn distance(&self, v: &DVector<f64>) -> f64 {
        (v - &self.basis * (self.basis.transpose() * v)).norm()
    }

    /// Largest deviation of `B^T B` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.basis.transpose() * &self.basis - DMatrix::identity(self.dim(), self.dim());
        g.amax()
    }
}

/// Orthogonal projector onto a target subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    matrix: DMatrix<f64>,
    target: Subspace,
}

impl Projector {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn target(&self) -> &Subspace {
        &self.target
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }
}

/// Default singular-value cutoff for an `rows x cols` matrix with largest
/// singular value `sigma_max`.
pub fn default_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

/// Thin SVD `a = U diag(s) V^T` with singular values in decreasing order.
struct Svd {
    u: DMatrix<f64>,
    s: Vec<f64>,
    vt: DMatrix<f64>,
}

/// The factorisation runs in faer; nalgebra 0.35's bidiagonal SVD can stop
/// before convergence on rank-deficient input and return factors that do
/// not reproduce the matrix.
fn svd(a: &DMatrix<f64>) -> Svd {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Svd {
            u: DMatrix::zeros(m, 0),
            s: Vec::new(),
            vt: DMatrix::zeros(0, n),
        };
    }
    let mat = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let f = mat.thin_svd().expect("SVD of a finite matrix converges");
    let (u, d, v) = (f.U(), f.S().column_vector(), f.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]));
    Svd {
        u: DMatrix::from_fn(m, k, |i, c| u[(i, order[c])]),
        s: order.iter().map(|&i| d[i]).collect(),
        vt: DMatrix::from_fn(k, n, |r, j| v[(j, order[r])]),
    }
}

/// Singular values in decreasing order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    svd(a).s
}

fn cutoff(a: &DMatrix<f64>, sv: &[f64], tol: Option<f64>) -> f64 {
    tol.unwrap_or_else(|| default_tolerance(a.nrows(), a.ncols(), sv.first().copied().unwrap_or(0.0)))
}

pub fn rank(a: &DMatrix<f64>, tol: Option<f64>) -> usize {
    let sv = singular_values(a);
    let cut = cutoff(a, &sv, tol);
    sv.iter().filter(|&&s| s > cut).count()
}

/// Column space of `a`: left singular vectors with singular value above the cutoff.
pub fn column_space(a: &DMatrix<f64>, tol: Option<f64>) -> Subspace {
    let m = a.nrows();
    if m == 0 || a.ncols() == 0 {
        return Subspace::zero(m);
    }
    let Svd { u, s, .. } = svd(a);
    let cut = cutoff(a, &s, tol);
    let keep = s.iter().filter(|&&v| v > cut).count();
    Subspace::from_orthonormal(u.columns(0, keep).into_owned())
}

/// Null space of `a` (vectors `x` with `a x = 0` under the cutoff).
pub fn null_space(a: &DMatrix<f64>, tol: Option<f64>) -> Subspace {
    let n = a.ncols();
    if a.nrows() == 0 {
        return Subspace::full(n);
    }
    let row_space = column_space(&a.transpose(), tol);
    row_space.complement()
}

/// `B B^T`, or `I - B B^T` when `onto_complement` is set.
pub fn orthoprojector(subspace: &Subspace, onto_complement: bool) -> Projector {
    if onto_complement {
        let target = subspace.complement();
        let n = subspace.ambient();
        Projector {
            matrix: DMatrix::identity(n, n) - subspace.projector_matrix(),
            target,
        }
    } else {
        Projector {
            matrix: subspace.projector_matrix(),
            target: subspace.clone(),
        }
    }
}

/// Norm of the minimal-norm right inverse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RightInverseNorm {
    Bounded(f64),
    Unbounded,
}

impl RightInverseNorm {
    pub fn value(&self) -> Option<f64> {
        match self {
            RightInverseNorm::Bounded(v) => Some(*v),
            RightInverseNorm::Unbounded => None,
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, RightInverseNorm::Bounded(_))
    }
}

/// `1 / sigma_m` when `a` (`m x n`) is onto, otherwise unbounded.
pub fn right_inverse_norm(a: &DMatrix<f64>, tol: Option<f64>) -> RightInverseNorm {
    let m = a.nrows();
    if m == 0 {
        return RightInverseNorm::Bounded(0.0);
    }
    let sv = singular_values(a);
    let cut = cutoff(a, &sv, tol);
    if sv.len() < m || sv[m - 1] <= cut {
        return RightInverseNorm::Unbounded;
    }
    RightInverseNorm::Bounded(1.0 / sv[m - 1])
}

/// Minimal-norm least-squares solution of `a x = b` and the residual norm.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>, tol: Option<f64>) -> (DVector<f64>, f64) {
    assert_eq!(a.nrows(), b.len(), "right-hand side has wrong length");
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return (DVector::zeros(n), b.norm());
    }
    let Svd { u, s: sv, vt } = svd(a);
    let cut = cutoff(a, &sv, tol);
    let mut x = DVector::zeros(n);
    for (i, &s) in sv.iter().enumerate() {
        if s > cut {
            let coeff = u.column(i).dot(b) / s;
            x += vt.row(i).transpose() * coeff;
        }
    }
    let residual = (a * &x - b).norm();
    (x, residual)
}

/// Solution of a square system by partially pivoted LU, with the 2-norm
/// 2-norm condition number.
///
/// `None` when the matrix is singular: with `tol == None`, when a pivot of
/// the elimination is at the rounding level `n * eps * max |U_ij|`; with an
/// explicit `tol`, when `sigma_min <= tol`. The pivot test sees the exact
/// cancellation of elimination, so it separates a singular matrix from an
/// invertible one whose condition number is near `1/eps`, which no cutoff
/// on computed singular values can do.
pub fn solve_square(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    tol: Option<f64>,
) -> Option<(DVector<f64>, f64)> {
    assert!(a.is_square(), "matrix must be square");
    let n = a.nrows();
    if n == 0 {
        return Some((DVector::zeros(0), 1.0));
    }
    let sv = singular_values(a);
    if sv.iter().any(|s| !s.is_finite()) {
        return None;
    }
    let lu = a.clone().lu();
    match tol {
        Some(t) if sv[n - 1] <= t => return None,
        Some(_) => {}
        None => {
            let u = lu.u();
            if u.diagonal().amin() <= n as f64 * f64::EPSILON * u.amax() {
                return None;
            }
        }
    }
    let x = lu.solve(b)?;
    let inverse = lu.try_inverse()?;
    if x.iter().chain(inverse.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    // sigma_max(A) * sigma_max(A^{-1}); the inverse from LU stays accurate
    // where the smallest computed singular value of A has no correct digits
    let inv_norm = singular_values(&inverse).first().copied().unwrap_or(0.0);
    Some((x, sv[0] * inv_norm))
}

/// Largest principal angle (radians) between two subspaces of equal dimension.
/// Returns `PI/2` when the dimensions differ.
pub fn max_principal_angle(a: &Subspace, b: &Subspace) -> f64 {
    if a.dim() != b.dim() || a.ambient() != b.ambient() {
        return std::f64::consts::FRAC_PI_2;
    }
    if a.dim() == 0 {
        return 0.0;
    }
    // sin of the largest angle = ||(I - P_b) A||_2
    let resid = a.basis() - b.basis() * (b.basis().transpose() * a.basis());
    let s = singular_values(&resid).first().copied().unwrap_or(0.0);
    s.min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    #[test]
    fn column_space_examples() {
        let s = column_space(&m(2, 2, &[1.0, 1.0, 0.0, 0.0]), None);
        assert_eq!(s.dim(), 1);
        assert_relative_eq!(s.basis()[(0, 0)].abs(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.basis()[(1, 0)], 0.0, epsilon = 1e-15);

        assert_eq!(column_space(&DMatrix::identity(3, 3), None).dim(), 3);

        let s = column_space(&m(2, 1, &[1.0, -2.0]), None);
        let b = s.basis().column(0).into_owned() * s.basis()[(0, 0)].signum();
        assert_relative_eq!(b[0], 1.0 / 5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(b[1], -2.0 / 5f64.sqrt(), epsilon = 1e-15);

        assert_eq!(column_space(&DMatrix::zeros(3, 2), None).dim(), 0);
    }

    #[test]
    fn orthoprojector_examples() {
        let s = column_space(&m(2, 1, &[1.0, 0.0]), None);
        let p = orthoprojector(&s, true);
        assert_relative_eq!(*p.matrix(), m(2, 2, &[0.0, 0.0, 0.0, 1.0]), epsilon = 1e-15);
        assert_eq!(p.target().dim(), 1);

        let p = orthoprojector(&Subspace::full(3), true);
        assert_eq!(*p.matrix(), DMatrix::zeros(3, 3));

        let s = column_space(&m(2, 1, &[1.0, 1.0]), None);
        let p = orthoprojector(&s, true);
        assert_relative_eq!(
            *p.matrix(),
            m(2, 2, &[0.5, -0.5, -0.5, 0.5]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn right_inverse_norm_examples() {
        assert_eq!(
            right_inverse_norm(&DMatrix::identity(2, 2), None),
            RightInverseNorm::Bounded(1.0)
        );
        assert_eq!(
            right_inverse_norm(&m(2, 2, &[2.0, 0.0, 0.0, 0.0]), None),
            RightInverseNorm::Unbounded
        );
        let v = right_inverse_norm(&m(2, 2, &[1.0, 1.0, -1.0, 1.0]), None)
            .value()
            .unwrap();
        assert_relative_eq!(v, 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        // wide surjective matrix
        assert_eq!(
            right_inverse_norm(&m(1, 2, &[3.0, 4.0]), None),
            RightInverseNorm::Bounded(0.2)
        );
    }

    #[test]
    fn least_squares_examples() {
        let (x, r) = least_squares(&DMatrix::identity(2, 2), &DVector::from_vec(vec![3.0, 4.0]), None);
        assert_relative_eq!(x, DVector::from_vec(vec![3.0, 4.0]), epsilon = 1e-15);
        assert_relative_eq!(r, 0.0, epsilon = 1e-15);

        let (x, r) = least_squares(
            &m(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            &DVector::from_vec(vec![1.0, 1.0]),
            None,
        );
        assert_relative_eq!(x, DVector::from_vec(vec![1.0, 0.0]), epsilon = 1e-15);
        assert_relative_eq!(r, 1.0, epsilon = 1e-15);

        let (x, r) = least_squares(&m(1, 2, &[1.0, 1.0]), &DVector::from_vec(vec![2.0]), None);
        assert_relative_eq!(x, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-14);
        assert_relative_eq!(r, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn solve_square_detects_singularity() {
        assert!(solve_square(&m(2, 2, &[1.0, 1.0, 1.0, 1.0]), &DVector::zeros(2), None).is_none());
        for a in [0.3, 3.0, -7.1, 1e-5] {
            assert!(solve_square(&m(2, 2, &[1.0, 1.0, a, a]), &DVector::zeros(2), None).is_none());
        }
        // invertible with condition number ~3e15: still solved
        let t = 1e-5;
        let near = m(2, 2, &[1.0, 1.0, t, t + t * t * t]);
        assert!(solve_square(&near, &DVector::from_vec(vec![1.0, 0.0]), None).is_some());
        assert!(solve_square(&near, &DVector::from_vec(vec![1.0, 0.0]), Some(1e-12)).is_none());
        let (x, cond) = solve_square(&m(2, 2, &[2.0, 0.0, 0.0, 1.0]), &DVector::from_vec(vec![2.0, 3.0]), None).unwrap();
        assert_relative_eq!(x, DVector::from_vec(vec![1.0, 3.0]));
        assert_relative_eq!(cond, 2.0);
    }

    #[test]
    fn null_space_and_angles() {
        let k = null_space(&m(1, 3, &[1.0, 1.0, 0.0]), None);
        assert_eq!(k.dim(), 2);
        assert!(k.distance(&DVector::from_vec(vec![1.0, -1.0, 0.0])) < 1e-14);
        let k2 = column_space(&m(3, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0]), None);
        assert!(max_principal_angle(&k, &k2) < 1e-14);
        let other = column_space(&m(3, 1, &[1.0, 0.0, 0.0]), None);
        assert_eq!(max_principal_angle(&k, &other), std::f64::consts::FRAC_PI_2);
    }

    fn matrix_strategy(max_dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
        (1..=max_dim, 1..=max_dim, 0..=max_dim).prop_flat_map(|(r, c, rank)| {
            let rank = rank.min(r).min(c);
            (
                proptest::collection::vec(-1.0f64..1.0, r * rank.max(1)),
                proptest::collection::vec(-1.0f64..1.0, rank.max(1) * c),
            )
                .prop_map(move |(a, b)| {
                    if rank == 0 {
                        return DMatrix::zeros(r, c);
                    }
                    DMatrix::from_vec(r, rank, a) * DMatrix::from_vec(rank, c, b)
                })
        })
    }

    proptest! {
        #[test]
        fn column_space_reproduces_columns(a in matrix_strategy(6)) {
            let s = column_space(&a, None);
            prop_assert!(s.orthonormality_error() <= 1e-12);
            let resid = &a - s.projector_matrix() * &a;
            let scale = singular_values(&a).first().copied().unwrap_or(0.0);
            prop_assert!(resid.norm() <= 1e-12 * scale.max(1e-300) * 10.0 + 1e-300);
        }

        #[test]
        fn least_squares_normal_equations(a in matrix_strategy(6), seed in any::<u64>()) {
            let b = DVector::from_fn(a.nrows(), |i, _| (((seed >> (i % 60)) & 0xff) as f64) / 128.0 - 1.0);
            let (x, _) = least_squares(&a, &b, None);
            let normal = a.transpose() * (&a * &x - &b);
            let scale = a.norm() * (a.norm() * x.norm() + b.norm());
            prop_assert!(normal.norm() <= 1e-10 * scale.max(1e-300));
        }

        #[test]
        fn right_inverse_times_smallest_singular_value(a in matrix_strategy(5)) {
            if let RightInverseNorm::Bounded(v) = right_inverse_norm(&a, None) {
                let sv = singular_values(&a);
                prop_assert!((v * sv[a.nrows() - 1] - 1.0).abs() <= 1e-12);
            } else {
                prop_assert!(rank(&a, None) < a.nrows());
            }
        }
    }
}
