//! Membership in `H_p(x*)`, the cone sampler and the strong-regularity estimate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Decomposition;
use crate::error::Result;
use crate::linalg::{self, RightInverseNorm};
use crate::sampling::{self, angle_between};

/// Controls for [`Decomposition::hp_sample`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSampleSpec {
    /// Number of refinement starts.
    pub budget: usize,
    pub seed: u64,
    /// Membership tolerance on unit directions.
    pub tol: f64,
    /// Directions closer than this angle (radians) are merged.
    pub dedup_angle: f64,
    /// Gauss-Newton iterations per start.
    pub max_refine_iter: usize,
    /// Extra starts spawned near every newly accepted direction.
    pub spawn: usize,
}

impl Default for ConeSampleSpec {
    fn default() -> Self {
        Self {
            budget: 200,
            seed: 0x5eed,
            tol: 1e-8,
            dedup_angle: 1e-3,
            max_refine_iter: 200,
            spawn: 2,
        }
    }
}

/// Outcome of the strong p-regularity estimate over sampled `H_alpha`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrongRegularity {
    pub alpha: f64,
    pub sampled: usize,
    pub accepted: usize,
    /// `None` when no sample fell in `H_alpha`.
    pub sup_right_inverse_norm: Option<RightInverseNorm>,
}

impl StrongRegularity {
    pub fn is_empty(&self) -> bool {
        self.sup_right_inverse_norm.is_none()
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self.sup_right_inverse_norm, Some(RightInverseNorm::Bounded(_)))
    }
}

impl Decomposition {
    /// `max_k ||F_k^{(k)}(x*)[h]^k|| / ||h||^k`.
    pub fn hp_residual(&self, h: &DVector<f64>) -> f64 {
        let norm = h.norm();
        if norm == 0.0 {
            return 0.0;
        }
        (1..=self.order())
            .map(|k| self.banded_form(k, h).norm() / norm.powi(k as i32))
            .fold(0.0, f64::max)
    }

    /// Whether `h` lies in every k-kernel, `||F_k^{(k)}(x*)[h]^k|| <= tol ||h||^k`.
    pub fn hp_membership(&self, h: &DVector<f64>, tol: f64) -> Result<bool> {
        self.check_direction(h)?;
        Ok(self.hp_residual(h) <= tol)
    }

    /// Unit directions of `H_p(x*)` found by Gauss-Newton refinement of
    /// seeded sphere samples, merged by angular distance.
    pub fn hp_sample(&self, spec: &ConeSampleSpec) -> Vec<DVector<f64>> {
        let n = self.model.n();
        let mut rng = sampling::rng(spec.seed);
        let mut found: Vec<DVector<f64>> = Vec::new();
        let mut pending: Vec<DVector<f64>> = Vec::new();
        for _ in 0..spec.budget {
            let start = match pending.pop() {
                Some(s) => s,
                None => sampling::unit_vector(&mut rng, n),
            };
            let Some(h) = self.refine_toward_cone(start, spec) else {
                continue;
            };
            if found.iter().all(|f| angle_between(f, &h) > spec.dedup_angle) {
                for _ in 0..spec.spawn {
                    let nudged = &h + sampling::gaussian(&mut rng, n) * 0.1;
                    let norm = nudged.norm();
                    if norm > 0.0 {
                        pending.push(nudged / norm);
                    }
                }
                found.push(h);
            }
        }
        found
    }

    /// Drives `h` onto the unit sphere and into the common zero set of the
    /// banded forms. Returns the limit when it passes membership.
    fn refine_toward_cone(&self, start: DVector<f64>, spec: &ConeSampleSpec) -> Option<DVector<f64>> {
        let p = self.order();
        let m = self.model.m();
        let n = self.model.n();
        let residual = |h: &DVector<f64>| -> DVector<f64> {
            let mut r = DVector::zeros(p * m + 1);
            for k in 1..=p {
                r.rows_mut((k - 1) * m, m).copy_from(&self.banded_form(k, h));
            }
            r[p * m] = 0.5 * (h.norm_squared() - 1.0);
            r
        };
        let mut h = start;
        let mut r = residual(&h);
        for _ in 0..spec.max_refine_iter {
            if self.hp_residual(&h) <= spec.tol * 1e-3 {
                break;
            }
            let mut jac = DMatrix::zeros(p * m + 1, n);
            for k in 1..=p {
                let block = self.banded_form_matrix(k, &h) * k as f64;
                jac.view_mut(((k - 1) * m, 0), (m, n)).copy_from(&block);
            }
            jac.row_mut(p * m).copy_from(&h.transpose());
            let (step, _) = linalg::least_squares(&jac, &r, None);
            let mut scale = 1.0;
            let mut improved = false;
            for _ in 0..30 {
                let trial = &h - &step * scale;
                let norm = trial.norm();
                if norm > 0.0 {
                    let trial = trial / norm;
                    let tr = residual(&trial);
                    if tr.norm() < r.norm() {
                        h = trial;
                        r = tr;
                        improved = true;
                        break;
                    }
                }
                scale *= 0.5;
            }
            if !improved {
                break;
            }
        }
        let norm = h.norm();
        let h = h / norm;
        (self.hp_residual(&h) <= spec.tol).then_some(h)
    }

    /// Largest right-inverse norm of `Psi_p(h)` over sampled unit `h` in
    /// `H_alpha = { ||F_i^{(i)}(x*)[h]^i|| <= alpha, i = 1..p }`.
    ///
    /// Uniform sphere samples are supplemented by samples jittered around the
    /// directions of `H_p`, where `H_alpha` concentrates for small `alpha`.
    /// For `p = 1` the operator does not depend on `h`, so its right-inverse
    /// norm is reported whether or not a sample is accepted.
    pub fn strong_regularity_estimate(&self, alpha: f64, budget: usize, seed: u64) -> StrongRegularity {
        let n = self.model.n();
        let mut rng = sampling::rng(seed);
        let mut candidates: Vec<DVector<f64>> =
            (0..budget).map(|_| sampling::unit_vector(&mut rng, n)).collect();

        let cone = self.hp_sample(&ConeSampleSpec {
            seed,
            ..ConeSampleSpec::default()
        });
        if !cone.is_empty() {
            let per_direction = budget.div_ceil(cone.len());
            for c in &cone {
                for i in 0..per_direction {
                    // radii spread geometrically from 1e-4 to 1
                    let radius = 10f64.powf(-4.0 * (i as f64 + 0.5) / per_direction as f64);
                    let nudged = c + sampling::unit_vector(&mut rng, n) * radius;
                    candidates.push(nudged.normalize());
                }
            }
        }

        let mut accepted = 0;
        let mut sup: Option<RightInverseNorm> = None;
        for h in &candidates {
            let inside = (1..=self.order()).all(|k| self.banded_form(k, h).norm() <= alpha);
            if !inside {
                continue;
            }
            accepted += 1;
            let op = self.partial_operator(self.order(), h);
            let norm = linalg::right_inverse_norm(&op, self.config.rank_tol);
            sup = Some(match (sup, norm) {
                (None, v) => v,
                (Some(RightInverseNorm::Unbounded), _) | (_, RightInverseNorm::Unbounded) => {
                    RightInverseNorm::Unbounded
                }
                (Some(RightInverseNorm::Bounded(a)), RightInverseNorm::Bounded(b)) => {
                    RightInverseNorm::Bounded(a.max(b))
                }
            });
        }
        if self.order() == 1 {
            let op = self.partial_operator(1, &DVector::from_element(n, 1.0));
            sup = Some(linalg::right_inverse_norm(&op, self.config.rank_tol));
        }
        StrongRegularity {
            alpha,
            sampled: candidates.len(),
            accepted,
            sup_right_inverse_norm: sup,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;
    use crate::mapping::MappingModel;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn decompose(eqs: &[&str], vars: &[&str]) -> Decomposition {
        let m = MappingModel::parse(eqs, vars).unwrap();
        build_decomposition(&m, &DVector::zeros(m.n()), m.p_max(), &PFactorConfig::default()).unwrap()
    }

    fn eq20a() -> Decomposition {
        decompose(
            &["x1^2 - x2^2 + x3^2", "x1^2 - x2^2 + x3^2 + x2*x3"],
            &["x1", "x2", "x3"],
        )
    }

    fn ex1() -> Decomposition {
        decompose(&["x1+x2", "x1*x2"], &["x1", "x2"])
    }

    #[test]
    fn membership_examples() {
        let d = eq20a();
        let s = 0.5f64.sqrt();
        assert!(d.hp_membership(&v(&[s, -s, 0.0]), 1e-8).unwrap());
        assert!(d.hp_membership(&v(&[s, s, 0.0]), 1e-8).unwrap());
        assert!(!d.hp_membership(&v(&[0.0, 0.0, 1.0]), 1e-8).unwrap());
        assert!(d.hp_membership(&v(&[0.0, 0.0, 0.0]), 1e-8).is_err());
    }

    #[test]
    fn eq20a_cone_is_two_lines() {
        let d = eq20a();
        let dirs = d.hp_sample(&ConeSampleSpec::default());
        assert_eq!(dirs.len(), 4);
        let s = 0.5f64.sqrt();
        for target in [[s, s, 0.0], [-s, -s, 0.0], [s, -s, 0.0], [-s, s, 0.0]] {
            let t = v(&target);
            assert!(dirs.iter().any(|d| angle_between(d, &t) < 1e-6));
        }
    }

    #[test]
    fn ex1_cone_is_empty() {
        assert!(ex1().hp_sample(&ConeSampleSpec::default()).is_empty());
    }

    #[test]
    fn strong_regularity_examples() {
        let est = eq20a().strong_regularity_estimate(0.1, 4000, 11);
        assert!(est.accepted > 0);
        assert!(est.is_bounded());

        let est = ex1().strong_regularity_estimate(0.05, 4000, 11);
        assert!(est.is_empty());
        assert_eq!(est.accepted, 0);

        let regular = decompose(&["x1", "x2"], &["x1", "x2"]);
        for alpha in [0.01, 0.5, 2.0] {
            let est = regular.strong_regularity_estimate(alpha, 200, 1);
            assert_eq!(est.sup_right_inverse_norm, Some(RightInverseNorm::Bounded(1.0)));
        }
    }
}
