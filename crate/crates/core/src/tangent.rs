//! Empirical checks of tangent-cone descriptions: the sampled `H_p(x*)`,
//! solution curves traced through `{F = 0}` along its directions, and fitted
//! constants for the distance-to-solution-set estimates.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, Result};
use crate::linalg::{self, Subspace};
use crate::mapping::MappingModel;
use crate::pfactor::{ConeSampleSpec, Decomposition};
use crate::sampling;
use crate::Error;

/// Unit directions of `H_p(x*)` with their membership residuals.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConeDescription {
    pub directions: Vec<Vec<f64>>,
    /// `max_k ||F_k^{(k)}(x*)[h]^k||` per direction.
    pub residuals: Vec<f64>,
}

impl ConeDescription {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn vectors(&self) -> Vec<DVector<f64>> {
        self.directions.iter().map(|d| DVector::from_column_slice(d)).collect()
    }
}

pub fn compute_cone(decomposition: &Decomposition, spec: &ConeSampleSpec) -> ConeDescription {
    let dirs = decomposition.hp_sample(spec);
    ConeDescription {
        residuals: dirs.iter().map(|h| decomposition.hp_residual(h)).collect(),
        directions: dirs.iter().map(|h| h.iter().copied().collect()).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveSample {
    pub t: f64,
    pub point: Vec<f64>,
    pub residual: f64,
    pub converged: bool,
    /// `||x(t) - (x* + t h)|| / t`.
    pub correction_ratio: f64,
    /// `(x(t) - x*) / t`.
    pub secant: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveTrace {
    pub direction: Vec<f64>,
    pub samples: Vec<CurveSample>,
    pub confirmed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceOptions {
    pub grid: Vec<f64>,
    pub max_steps: usize,
    /// Residual tolerance relative to the sum of absolute term values of `F`.
    pub rel_tol: f64,
    /// Ratios at or below this count as zero.
    pub ratio_floor: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            grid: (3..=20).map(|j| 2f64.powi(-j)).collect(),
            max_steps: 50,
            rel_tol: 1e-12,
            ratio_floor: 1e-10,
        }
    }
}

fn residual_tol(model: &MappingModel, x: &DVector<f64>, rel_tol: f64) -> Result<f64> {
    Ok(rel_tol * model.evaluation_scale(x)?.norm())
}

/// Damped Gauss-Newton for `F(base + B y) = 0` with minimal-norm steps.
/// Returns the final point, its residual norm and whether it met the tolerance.
fn gauss_newton(
    model: &MappingModel,
    base: &DVector<f64>,
    slice: Option<&DMatrix<f64>>,
    max_steps: usize,
    rel_tol: f64,
) -> Result<(DVector<f64>, f64, bool)> {
    let mut x = base.clone();
    let mut f = model.evaluate(&x)?;
    for _ in 0..max_steps {
        if f.norm() <= residual_tol(model, &x, rel_tol)? {
            return Ok((x, f.norm(), true));
        }
        let jac = model.jacobian(&x)?;
        let step = match slice {
            Some(b) => b * linalg::least_squares(&(&jac * b), &f, None).0,
            None => linalg::least_squares(&jac, &f, None).0,
        };
        let mut scale = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let trial = &x - &step * scale;
            let tf = model.evaluate(&trial)?;
            if tf.norm() < f.norm() {
                x = trial;
                f = tf;
                moved = true;
                break;
            }
            scale *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let ok = f.norm() <= residual_tol(model, &x, rel_tol)?;
    Ok((x, f.norm(), ok))
}

/// Corrects `x* + t h` back onto `{F = 0}` within the hyperplane orthogonal
/// to `h` for every `t` of the grid.
pub fn trace_curve(
    model: &MappingModel,
    x_star: &DVector<f64>,
    h: &DVector<f64>,
    options: &TraceOptions,
) -> Result<CurveTrace> {
    check_dim("base point", model.n(), x_star.len())?;
    check_dim("direction", model.n(), h.len())?;
    let norm = h.norm();
    if norm == 0.0 {
        return Err(Error::ZeroDirection);
    }
    let h = h / norm;
    let line = Subspace::from_orthonormal(DMatrix::from_column_slice(h.len(), 1, h.as_slice()));
    let slice = line.complement();
    let mut samples = Vec::with_capacity(options.grid.len());
    for &t in &options.grid {
        let start = x_star + &h * t;
        let (x, residual, converged) =
            gauss_newton(model, &start, Some(slice.basis()), options.max_steps, options.rel_tol)?;
        samples.push(CurveSample {
            t,
            residual,
            converged,
            correction_ratio: (&x - &start).norm() / t,
            secant: ((&x - x_star) / t).iter().copied().collect(),
            point: x.iter().copied().collect(),
        });
    }
    let confirmed = match (samples.first(), samples.last()) {
        (Some(first), Some(last)) => {
            samples.iter().all(|s| s.converged)
                && (last.correction_ratio <= options.ratio_floor
                    || last.correction_ratio <= first.correction_ratio / 10.0)
        }
        _ => false,
    };
    Ok(CurveTrace {
        direction: h.iter().copied().collect(),
        samples,
        confirmed,
    })
}

pub fn trace_curves(
    model: &MappingModel,
    x_star: &DVector<f64>,
    directions: &[DVector<f64>],
    options: &TraceOptions,
) -> Result<Vec<CurveTrace>> {
    directions
        .iter()
        .map(|h| trace_curve(model, x_star, h, options))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceSample {
    pub radius: f64,
    pub xi: Vec<f64>,
    /// `||x(xi)||`: displacement to the root found from `xi`.
    pub displacement: f64,
    /// `sum_i ||f_i(xi) - f_i(x*)|| / ||xi - x*||^{i-1}`.
    pub rhs1: f64,
    /// `sum_i ||f_i(xi) - f_i(x*)||^{1/i}`.
    pub rhs2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadiusFit {
    pub radius: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub kept: usize,
    pub dropped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceEstimate {
    pub fits: Vec<RadiusFit>,
    /// Smallest constants valid over every kept sample.
    pub delta1: f64,
    pub delta2: f64,
    /// `max / min` of the per-radius constants.
    pub spread1: f64,
    pub spread2: f64,
    pub stable: bool,
    pub samples: Vec<DistanceSample>,
    /// `delta * rhs - displacement` per sample, with the overall constants.
    pub margins1: Vec<f64>,
    pub margins2: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceOptions {
    pub radii: Vec<f64>,
    /// Directions per radius; the same directions are reused at every radius.
    pub directions: usize,
    pub seed: u64,
    pub max_steps: usize,
    pub rel_tol: f64,
    /// Largest `max/min` accepted as stable.
    pub stability_factor: f64,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        Self {
            radii: vec![1e-2, 1e-3, 1e-4, 1e-5],
            directions: 64,
            seed: 0x5eed,
            max_steps: 100,
            rel_tol: 1e-12,
            stability_factor: 2.0,
        }
    }
}

const RHS_FLOOR: f64 = 1e-300;

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi == 0.0 {
        1.0
    } else if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Fits `delta1`, `delta2` in
/// `||x(xi)|| <= delta1 sum_i ||f_i(xi) - f_i(x*)|| / ||xi - x*||^{i-1}` and
/// `||x(xi)|| <= delta2 sum_i ||f_i(xi) - f_i(x*)||^{1/i}`, where `xi + x(xi)`
/// is the root reached by minimal-norm Gauss-Newton from `xi`.
pub fn distance_estimate_check(decomposition: &Decomposition, options: &DistanceOptions) -> Result<DistanceEstimate> {
    let model = decomposition.model();
    let x_star = decomposition.base_point();
    let n = model.n();
    let p = decomposition.order();
    let mut rng = sampling::rng(options.seed);
    let dirs: Vec<DVector<f64>> = (0..options.directions)
        .map(|_| sampling::unit_vector(&mut rng, n))
        .collect();
    let base: Vec<DVector<f64>> = (1..=p)
        .map(|k| decomposition.banded_value(k, x_star))
        .collect::<Result<_>>()?;

    let mut fits = Vec::new();
    let mut samples = Vec::new();
    for &radius in &options.radii {
        let mut fit = RadiusFit {
            radius,
            delta1: 0.0,
            delta2: 0.0,
            kept: 0,
            dropped: 0,
        };
        for u in &dirs {
            let xi = x_star + u * radius;
            let (root, _, ok) = gauss_newton(model, &xi, None, options.max_steps, options.rel_tol)?;
            if !ok {
                fit.dropped += 1;
                continue;
            }
            let dist = (&xi - x_star).norm();
            let mut rhs1 = 0.0;
            let mut rhs2 = 0.0;
            for k in 1..=p {
                let diff = (decomposition.banded_value(k, &xi)? - &base[k - 1]).norm();
                rhs1 += diff / dist.powi(k as i32 - 1);
                rhs2 += diff.powf(1.0 / k as f64);
            }
            let displacement = (&root - &xi).norm();
            fit.delta1 = fit.delta1.max(displacement / rhs1.max(RHS_FLOOR));
            fit.delta2 = fit.delta2.max(displacement / rhs2.max(RHS_FLOOR));
            fit.kept += 1;
            samples.push(DistanceSample {
                radius,
                xi: xi.iter().copied().collect(),
                displacement,
                rhs1,
                rhs2,
            });
        }
        fits.push(fit);
    }
    let delta1 = fits.iter().map(|f| f.delta1).fold(0.0, f64::max);
    let delta2 = fits.iter().map(|f| f.delta2).fold(0.0, f64::max);
    let kept: Vec<&RadiusFit> = fits.iter().filter(|f| f.kept > 0).collect();
    let spread1 = spread(kept.iter().map(|f| f.delta1));
    let spread2 = spread(kept.iter().map(|f| f.delta2));
    let stable = kept.len() == fits.len()
        && spread1 < options.stability_factor
        && spread2 < options.stability_factor;
    let margins1 = samples.iter().map(|s| delta1 * s.rhs1 - s.displacement).collect();
    let margins2 = samples.iter().map(|s| delta2 * s.rhs2 - s.displacement).collect();
    Ok(DistanceEstimate {
        fits,
        delta1,
        delta2,
        spread1,
        spread2,
        stable,
        samples,
        margins1,
        margins2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfactor::{build_decomposition, PFactorConfig};
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn eq20a() -> MappingModel {
        MappingModel::parse(
            &["x1^2 - x2^2 + x3^2", "x1^2 - x2^2 + x3^2 + x2*x3"],
            &["x1", "x2", "x3"],
        )
        .unwrap()
    }

    fn decompose(m: &MappingModel) -> Decomposition {
        build_decomposition(m, &DVector::zeros(m.n()), m.p_max(), &PFactorConfig::default()).unwrap()
    }

    #[test]
    fn planar_cone() {
        let m = MappingModel::parse(&["x1^2 - x2^2"], &["x1", "x2"]).unwrap();
        let cone = compute_cone(&decompose(&m), &ConeSampleSpec::default());
        assert_eq!(cone.len(), 4);
        let s = 0.5f64.sqrt();
        for d in cone.vectors() {
            assert_relative_eq!(d[0].abs(), s, epsilon = 1e-6);
            assert_relative_eq!(d[1].abs(), s, epsilon = 1e-6);
        }
        assert!(cone.residuals.iter().all(|&r| r <= 1e-8));
    }

    #[test]
    fn eq20a_lines_are_traced() {
        let m = eq20a();
        let s = 0.5f64.sqrt();
        let traces = trace_curves(
            &m,
            &DVector::zeros(3),
            &[v(&[s, s, 0.0]), v(&[s, -s, 0.0]), v(&[0.0, 0.0, 1.0])],
            &TraceOptions::default(),
        )
        .unwrap();
        assert!(traces[0].confirmed && traces[1].confirmed);
        assert!(traces[0].samples.last().unwrap().correction_ratio < 1e-3);
        assert!(!traces[2].confirmed);
        assert_eq!(traces[0].samples.len(), 18);
    }

    #[test]
    fn affine_kernel_direction_needs_no_correction() {
        let m = MappingModel::parse(&["x1 + x2 - x3"], &["x1", "x2", "x3"]).unwrap();
        let trace = trace_curve(&m, &DVector::zeros(3), &v(&[1.0, 0.0, 1.0]), &TraceOptions::default()).unwrap();
        assert!(trace.confirmed);
        assert!(trace.samples.iter().all(|s| s.correction_ratio == 0.0));
    }

    #[test]
    fn curved_regular_solution_set() {
        // circle through the origin: the tangent is (1, 0), the correction O(t)
        let m = MappingModel::parse(&["x1^2 + x2^2 - 2*x2"], &["x1", "x2"]).unwrap();
        let trace = trace_curve(&m, &DVector::zeros(2), &v(&[1.0, 0.0]), &TraceOptions::default()).unwrap();
        assert!(trace.confirmed);
        let first = trace.samples[0].correction_ratio;
        let last = trace.samples.last().unwrap().correction_ratio;
        assert_relative_eq!(first, (1.0 - (1.0 - 0.125f64 * 0.125).sqrt()) / 0.125, epsilon = 1e-10);
        assert!(last < first / 1000.0);
    }

    #[test]
    fn eq20a_distance_constants_are_stable() {
        let est = distance_estimate_check(&decompose(&eq20a()), &DistanceOptions::default()).unwrap();
        assert!(est.stable, "{:?}", est.fits);
        assert!(est.margins1.iter().chain(&est.margins2).all(|&m| m >= -1e-12));
    }

    #[test]
    fn affine_distance_matches_pseudo_inverse_bound() {
        let m = MappingModel::parse(&["x1 + 2*x2", "x2 - x3"], &["x1", "x2", "x3"]).unwrap();
        let d = decompose(&m);
        let est = distance_estimate_check(&d, &DistanceOptions::default()).unwrap();
        let a = m.jacobian(&DVector::zeros(3)).unwrap();
        let sv = linalg::singular_values(&a);
        assert!(est.delta1 <= 1.0 / sv[1] * (1.0 + 1e-9));
        assert!(est.spread1 < 1.0 + 1e-6);
        assert!(est.stable);
    }

    #[test]
    fn points_on_the_solution_set_need_no_displacement() {
        let m = eq20a();
        let root = v(&[0.01, 0.01, 0.0]);
        let (x, residual, ok) = gauss_newton(&m, &root, None, 10, 1e-12).unwrap();
        assert!(ok);
        assert_eq!(residual, 0.0);
        assert_eq!(x, root);
    }
}
