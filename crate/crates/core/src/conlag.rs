//! Inequality-constrained problems through the modified Lagrangian
//! `L_E(x, l) = phi(x) + 1/2 sum_i l_i^2 g_i(x)` and its stationarity system
//!
//! ```text
//! G(x, l) = ( grad phi(x) + 1/2 sum_i l_i^2 grad g_i(x) ;  D(l) g(x) ) = 0.
//! ```
//!
//! Weakly active constraints (active, zero multiplier) make `G'` singular at
//! the KKT point. With `h = (0_n, 1 on weakly active multipliers, 0 elsewhere)`
//! the 2-factor scheme
//! `w+ = w - [G'(w) + G''(w)h]^{-1} (G(w) + G'(w)h)` restores quadratic
//! convergence.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, Result};
use crate::expr::{Polynomial, PolySystem};
use crate::linalg::{self, Subspace};
use crate::mapping::MappingModel;
use crate::sampling;
use crate::solvers::{newton_like, SolveOptions, SolveReport, StopRule};
use crate::Error;

/// `min phi(x)` subject to `g_i(x) <= 0`.
#[derive(Clone, Debug)]
pub struct ConstrainedProblem {
    objective: MappingModel,
    constraints: MappingModel,
}

impl ConstrainedProblem {
    pub fn new(objective: MappingModel, constraints: MappingModel) -> Result<Self> {
        check_dim("objective components", 1, objective.m())?;
        check_dim("constraint variables", objective.n(), constraints.n())?;
        Ok(Self {
            objective,
            constraints,
        })
    }

    pub fn objective(&self) -> &MappingModel {
        &self.objective
    }

    pub fn constraints(&self) -> &MappingModel {
        &self.constraints
    }

    pub fn n(&self) -> usize {
        self.objective.n()
    }

    pub fn m(&self) -> usize {
        self.constraints.m()
    }

    fn phi(&self) -> &Polynomial {
        &self.objective.system().components()[0]
    }

    fn g(&self) -> &[Polynomial] {
        self.constraints.system().components()
    }

    /// `L_E(x, l)` for fixed numeric multipliers, as a polynomial in `x`.
    pub fn modified_lagrangian(&self, lambda: &DVector<f64>) -> Result<Polynomial> {
        check_dim("multipliers", self.m(), lambda.len())?;
        Ok(self
            .g()
            .iter()
            .zip(lambda.iter())
            .fold(self.phi().clone(), |acc, (g, l)| acc.add(&g.scale(0.5 * l * l))))
    }

    /// `d^2/dx^2 L_E(x, l)`.
    pub fn lagrangian_hessian(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim("point", self.n(), x.len())?;
        let le = self.modified_lagrangian(lambda)?;
        let grad = le.gradient();
        let n = self.n();
        Ok(DMatrix::from_fn(n, n, |i, j| grad[i].partial(j).eval(x.as_slice())))
    }

    /// Assembles `G` over the variables `(x, l)`.
    pub fn build_system(&self) -> Result<ModLagSystem> {
        let n = self.n();
        let m = self.m();
        let total = n + m;
        let placement: Vec<usize> = (0..n).collect();
        let lam: Vec<Polynomial> = (0..m).map(|j| Polynomial::variable(total, n + j)).collect();
        let half_sq: Vec<Polynomial> = lam.iter().map(|l| l.pow(2).scale(0.5)).collect();
        let g: Vec<Polynomial> = self.g().iter().map(|p| p.embed(total, &placement)).collect();

        let mut components = Vec::with_capacity(total);
        for i in 0..n {
            let mut c = self.phi().partial(i).embed(total, &placement);
            for (gj, hs) in self.g().iter().zip(&half_sq) {
                c = c.add(&hs.mul(&gj.partial(i).embed(total, &placement)));
            }
            components.push(c);
        }
        for (l, gj) in lam.iter().zip(&g) {
            components.push(l.mul(gj));
        }

        let mut names: Vec<String> = self.objective.system().names().to_vec();
        names.extend(multiplier_names(&names, m));
        let system = PolySystem::new(names, components)?;
        Ok(ModLagSystem {
            problem: self.clone(),
            model: MappingModel::new(system),
        })
    }
}

fn multiplier_names(taken: &[String], m: usize) -> Vec<String> {
    let mut prefix = String::from("lambda");
    while (1..=m).any(|j| taken.contains(&format!("{prefix}{j}"))) {
        prefix.insert(0, '_');
    }
    (1..=m).map(|j| format!("{prefix}{j}")).collect()
}

/// `G` as a mapping over `w = (x, l)`.
#[derive(Clone, Debug)]
pub struct ModLagSystem {
    problem: ConstrainedProblem,
    model: MappingModel,
}

impl ModLagSystem {
    pub fn problem(&self) -> &ConstrainedProblem {
        &self.problem
    }

    pub fn model(&self) -> &MappingModel {
        &self.model
    }

    pub fn n(&self) -> usize {
        self.problem.n()
    }

    pub fn m(&self) -> usize {
        self.problem.m()
    }

    pub fn join(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("point", self.n(), x.len())?;
        check_dim("multipliers", self.m(), lambda.len())?;
        Ok(DVector::from_iterator(
            self.n() + self.m(),
            x.iter().chain(lambda.iter()).copied(),
        ))
    }

    pub fn split(&self, w: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (w.rows(0, self.n()).into_owned(), w.rows(self.n(), self.m()).into_owned())
    }

    /// `G(w) + G'(w) h`.
    pub fn two_factor_residual(&self, w: &DVector<f64>, h: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.model.evaluate(w)? + self.model.jacobian(w)? * h)
    }

    /// `G'(w) + G''(w) h`.
    pub fn two_factor_matrix(&self, w: &DVector<f64>, h: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim("direction", self.model.n(), h.len())?;
        Ok(self.model.jacobian(w)? + self.model.form_matrix(2, w, h)?)
    }
}

/// Activity pattern at a KKT candidate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub active: Vec<usize>,
    pub weakly_active: Vec<usize>,
    pub strongly_active: Vec<usize>,
    pub inactive: Vec<usize>,
    /// Constraint indices reordered weakly active first, then strongly
    /// active, then inactive.
    pub ordering: Vec<usize>,
}

impl Classification {
    /// Number of weakly active constraints.
    pub fn s(&self) -> usize {
        self.weakly_active.len()
    }
}

/// Sorts constraints into active / weakly active / strongly active / inactive.
pub fn classify(
    problem: &ConstrainedProblem,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
    tol: f64,
) -> Result<Classification> {
    check_dim("multipliers", problem.m(), lambda.len())?;
    let g = problem.constraints.evaluate(x)?;
    let worst = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if worst > tol {
        return Err(Error::Infeasible {
            what: "the inequality constraints",
            violation: worst,
        });
    }
    let most_negative = lambda.iter().copied().fold(0.0, f64::min);
    if most_negative < -tol {
        return Err(Error::Infeasible {
            what: "multiplier nonnegativity",
            violation: -most_negative,
        });
    }
    let mut out = Classification {
        active: Vec::new(),
        weakly_active: Vec::new(),
        strongly_active: Vec::new(),
        inactive: Vec::new(),
        ordering: Vec::new(),
    };
    for j in 0..problem.m() {
        if g[j].abs() <= tol {
            out.active.push(j);
            if lambda[j].abs() <= tol {
                out.weakly_active.push(j);
            } else {
                out.strongly_active.push(j);
            }
        } else {
            out.inactive.push(j);
        }
    }
    out.ordering = [&out.weakly_active[..], &out.strongly_active, &out.inactive].concat();
    Ok(out)
}

/// `h = (0_n, e_{I0})`; `Nondegenerate` when nothing is weakly active.
pub fn build_h(n: usize, m: usize, classes: &Classification) -> Result<DVector<f64>> {
    if classes.s() == 0 {
        return Err(Error::Nondegenerate);
    }
    let mut h = DVector::zeros(n + m);
    for &j in &classes.weakly_active {
        h[n + j] = 1.0;
    }
    Ok(h)
}

pub fn classify_and_build_h(
    problem: &ConstrainedProblem,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
    tol: f64,
) -> Result<(Classification, DVector<f64>)> {
    let classes = classify(problem, x, lambda, tol)?;
    let h = build_h(problem.n(), problem.m(), &classes)?;
    Ok((classes, h))
}

/// The 2-factor iteration on `G`. With `h = 0` this is classical Newton on `G`.
/// Multiplier signs are not enforced along the way.
pub fn two_factor_solve(
    system: &ModLagSystem,
    w0: &DVector<f64>,
    h: &DVector<f64>,
    options: &SolveOptions,
) -> Result<SolveReport> {
    let dim = system.n() + system.m();
    check_dim("start point", dim, w0.len())?;
    check_dim("direction", dim, h.len())?;
    newton_like(
        w0,
        options,
        StopRule::Residual,
        |w| system.two_factor_residual(w, h),
        |w| system.two_factor_matrix(w, h),
    )
}

/// Whether the multiplier block of `w` is nonnegative up to `tol`.
pub fn multipliers_nonnegative(system: &ModLagSystem, w: &DVector<f64>, tol: f64) -> bool {
    let (_, lambda) = system.split(w);
    lambda.iter().all(|&l| l >= -tol)
}

/// Evidence for the nonsingularity of `Phi'(w*) = G'(w*) + G''(w*)h`.
#[derive(Clone, Debug)]
pub struct LemmaCertificate {
    /// Rank of the active constraint gradients.
    pub active_gradient_rank: usize,
    /// Active gradients are linearly independent.
    pub cqc: bool,
    /// Smallest `z^T V z / ||z||^2` over the checked cone directions.
    pub cone_min_curvature: f64,
    pub cone_positive: bool,
    pub cone_samples: usize,
    pub extreme_rays: usize,
    pub phi_prime: DMatrix<f64>,
    pub phi_prime_rank: usize,
    pub determinant: f64,
    pub nonsingular: bool,
    /// `V = d^2/dx^2 L_E(x*, l*)`.
    pub v: DMatrix<f64>,
    /// Columns `grad g_j` for weakly active `j`, `l*_j grad g_j` for strongly active `j`.
    pub q: DMatrix<f64>,
    /// `g_j(x*)` over inactive `j`.
    pub d_n: Vec<f64>,
    /// Largest entry of `Phi'(w*)`, reordered, minus the block matrix
    /// `[[V, Q, 0], [Q^T, 0, 0], [0, 0, D_N]]`.
    pub block_match_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LemmaOptions {
    pub seed: u64,
    pub cone_samples: usize,
    /// Extreme rays are enumerated when `n` is at most this.
    pub max_ray_dim: usize,
    pub rank_tol: Option<f64>,
    /// Curvature must exceed this on every checked direction.
    pub curvature_floor: f64,
}

impl Default for LemmaOptions {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            cone_samples: 1000,
            max_ray_dim: 8,
            rank_tol: None,
            curvature_floor: 1e-10,
        }
    }
}

pub fn lemma_certificate(
    system: &ModLagSystem,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
    classes: &Classification,
    h: &DVector<f64>,
    options: &LemmaOptions,
) -> Result<LemmaCertificate> {
    let problem = system.problem();
    let n = problem.n();
    let m = problem.m();
    let w = system.join(x, lambda)?;
    let jac_g = problem.constraints.jacobian(x)?;
    let g = problem.constraints.evaluate(x)?;

    let active_rows = DMatrix::from_fn(classes.active.len(), n, |r, c| jac_g[(classes.active[r], c)]);
    let active_gradient_rank = linalg::rank(&active_rows, options.rank_tol);
    let cqc = active_gradient_rank == classes.active.len();

    let v = problem.lagrangian_hessian(x, lambda)?;
    let (directions, extreme_rays) = cone_directions(&active_rows, options);
    let cone_min_curvature = directions
        .iter()
        .map(|z| z.dot(&(&v * z)) / z.norm_squared())
        .fold(f64::INFINITY, f64::min);
    let cone_positive = cone_min_curvature > options.curvature_floor;

    let phi_prime = system.two_factor_matrix(&w, h)?;
    let phi_prime_rank = linalg::rank(&phi_prime, options.rank_tol);
    let determinant = phi_prime.determinant();

    let weak = classes.weakly_active.len();
    let strong = classes.strongly_active.len();
    let q = DMatrix::from_fn(n, weak + strong, |r, c| {
        let j = classes.ordering[c];
        let scale = if c < weak { 1.0 } else { lambda[j] };
        scale * jac_g[(j, r)]
    });
    let d_n: Vec<f64> = classes.inactive.iter().map(|&j| g[j]).collect();

    let dim = n + m;
    let mut expected = DMatrix::zeros(dim, dim);
    expected.view_mut((0, 0), (n, n)).copy_from(&v);
    expected.view_mut((0, n), (n, weak + strong)).copy_from(&q);
    expected.view_mut((n, 0), (weak + strong, n)).copy_from(&q.transpose());
    for (i, value) in d_n.iter().enumerate() {
        let k = n + weak + strong + i;
        expected[(k, k)] = *value;
    }
    let order: Vec<usize> = (0..n).chain(classes.ordering.iter().map(|j| n + j)).collect();
    let permuted = DMatrix::from_fn(dim, dim, |r, c| phi_prime[(order[r], order[c])]);
    let block_match_error = (permuted - &expected).amax();

    Ok(LemmaCertificate {
        active_gradient_rank,
        cqc,
        cone_min_curvature,
        cone_positive,
        cone_samples: directions.len(),
        extreme_rays,
        phi_prime_rank,
        nonsingular: phi_prime_rank == dim,
        determinant,
        phi_prime,
        v,
        q,
        d_n,
        block_match_error,
    })
}

/// Directions of `{ z : A z <= 0 }`: extreme rays and lineality directions
/// (small `n`), plus seeded samples. Returns the directions and the number
/// of extreme rays among them.
fn cone_directions(a: &DMatrix<f64>, options: &LemmaOptions) -> (Vec<DVector<f64>>, usize) {
    let n = a.ncols();
    let mut rng = sampling::rng(options.seed);
    if a.nrows() == 0 {
        let dirs = (0..options.cone_samples)
            .map(|_| sampling::unit_vector(&mut rng, n))
            .collect();
        return (dirs, 0);
    }
    let feasible = |z: &DVector<f64>| (a * z).iter().all(|&v| v <= 1e-12 * z.norm());

    if n > options.max_ray_dim {
        // rejection sampling only
        let mut dirs = Vec::new();
        let mut tries = 0;
        while dirs.len() < options.cone_samples && tries < 100 * options.cone_samples {
            tries += 1;
            let z = sampling::unit_vector(&mut rng, n);
            if feasible(&z) {
                dirs.push(z);
            }
        }
        return (dirs, 0);
    }

    // split off the lineality space Ker A; the rest is a pointed cone in
    // the row space of A
    let lineality = linalg::null_space(a, options.rank_tol);
    let row_space = lineality.complement();
    let d = row_space.dim();
    let reduced = a * row_space.basis();
    let mut rays = Vec::new();
    for subset in subsets(reduced.nrows(), d.saturating_sub(1)) {
        let rows = DMatrix::from_fn(subset.len(), d, |r, c| reduced[(subset[r], c)]);
        let kernel = if subset.is_empty() {
            Subspace::full(d)
        } else {
            linalg::null_space(&rows, options.rank_tol)
        };
        if kernel.dim() != 1 {
            continue;
        }
        let y: DVector<f64> = kernel.basis().column(0).into_owned();
        for cand in [y.clone(), -y] {
            let z = row_space.basis() * &cand;
            if feasible(&z) && rays.iter().all(|r: &DVector<f64>| sampling::angle_between(r, &z) > 1e-9) {
                rays.push(z);
            }
        }
    }
    let extreme = rays.len();
    let mut dirs = rays.clone();
    for c in lineality.basis().column_iter() {
        dirs.push(c.into_owned());
        dirs.push(-c.into_owned());
    }
    for _ in 0..options.cone_samples {
        let mut z = DVector::zeros(n);
        for r in &rays {
            let weight: f64 = -rand::Rng::random::<f64>(&mut rng).max(f64::MIN_POSITIVE).ln();
            z += r * weight;
        }
        if lineality.dim() > 0 {
            z += lineality.basis() * sampling::gaussian(&mut rng, lineality.dim());
        }
        if z.norm() > 0.0 {
            dirs.push(z.normalize());
        }
    }
    (dirs, extreme)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, &mut Vec::new(), &mut out);
    }
    out
}
