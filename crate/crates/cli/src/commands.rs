//! Subcommand bodies. Each returns a serializable payload plus warnings and
//! an optional numeric-failure message.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use pfactor::conlag::{self, Classification, LemmaCertificate, LemmaOptions};
use pfactor::linalg::{self, RightInverseNorm};
use pfactor::optimality::{self, CertifyOptions, LagrangeCertificate, OptimalityReport};
use pfactor::pfactor::{
    build_decomposition, build_newton_chain, ConeSampleSpec, Decomposition, NewtonChain, PFactorConfig, RemarkCheck,
    StrongRegularity,
};
use pfactor::sampling::{self, angle_between};
use pfactor::solvers::{self, SolveOptions, SolveReport, SolveStatus};
use pfactor::tangent::{self, ConeDescription, CurveTrace, DistanceEstimate, DistanceOptions, TraceOptions};
use serde::Serialize;
use serde_json::Value;

use crate::args::Config;
use crate::error::CliError;
use crate::problem::{ProblemFile, ResolvedSystem, SystemKind};
use crate::registry::{load_registry, BuiltinProblem};
use crate::report::Timings;

/// Residual size at `x*` above which a warning is attached.
pub const ROOT_WARNING: f64 = 1e-8;
/// Angle under which a traced direction counts as a cone direction.
pub const CONE_MATCH_ANGLE: f64 = 1e-3;

type Mat = Vec<Vec<f64>>;

fn rows(m: &DMatrix<f64>) -> Mat {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vecf(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub struct Timer {
    start: Instant,
    last: Instant,
    phases: Vec<(String, f64)>,
}

impl Default for Timer {
    fn default() -> Self {
        let now = Instant::now();
        Self {
            start: now,
            last: now,
            phases: Vec::new(),
        }
    }
}

impl Timer {
    pub fn mark(&mut self, phase: &str) {
        let now = Instant::now();
        self.phases
            .push((phase.to_string(), (now - self.last).as_secs_f64() * 1e3));
        self.last = now;
    }

    pub fn finish(self) -> Timings {
        Timings {
            total_ms: self.start.elapsed().as_secs_f64() * 1e3,
            phases: self.phases,
        }
    }
}

#[derive(Default)]
pub struct Outcome {
    pub result: Value,
    pub warnings: Vec<String>,
    pub failure: Option<String>,
}

fn outcome<T: Serialize>(payload: &T, warnings: Vec<String>, failure: Option<String>) -> Outcome {
    Outcome {
        result: serde_json::to_value(payload).expect("payloads serialize"),
        warnings,
        failure,
    }
}

#[derive(Serialize)]
struct SystemEcho {
    kind: SystemKind,
    variables: Vec<String>,
    components: Vec<String>,
    point: Vec<f64>,
    residual_norm: f64,
}

fn system_echo(sys: &ResolvedSystem, warnings: &mut Vec<String>) -> Result<SystemEcho, CliError> {
    let residual_norm = sys.model.evaluate(&sys.point)?.norm();
    if residual_norm > ROOT_WARNING {
        warnings.push(format!(
            "the base point is not a root: ||F(x*)|| = {residual_norm:e}; derivative data is still computed there"
        ));
    }
    Ok(SystemEcho {
        kind: sys.kind,
        variables: sys.variables(),
        components: sys.components(),
        point: vecf(&sys.point),
        residual_norm,
    })
}

fn pfactor_config(cfg: &Config) -> PFactorConfig {
    PFactorConfig {
        rank_tol: cfg.rank_tol,
        kernel_tol: cfg.kernel_tol,
        seed: cfg.seed,
        span_samples: None,
    }
}

fn cone_spec(cfg: &Config) -> ConeSampleSpec {
    ConeSampleSpec {
        budget: cfg.sampling.cone_budget,
        seed: cfg.seed,
        tol: cfg.sampling.cone_tol,
        dedup_angle: cfg.sampling.cone_dedup_angle,
        ..ConeSampleSpec::default()
    }
}

fn decompose(model: &pfactor::MappingModel, point: &DVector<f64>, cfg: &Config) -> Result<Decomposition, CliError> {
    let p_cap = cfg.p.unwrap_or(model.p_max());
    Ok(build_decomposition(model, point, p_cap, &pfactor_config(cfg))?)
}

fn direction(cfg: &Config, dim: usize) -> Result<Option<DVector<f64>>, CliError> {
    match &cfg.h {
        None => Ok(None),
        Some(h) if h.len() == dim => Ok(Some(DVector::from_column_slice(h))),
        Some(h) => Err(CliError::Usage(format!("h has {} entries, expected {dim}", h.len()))),
    }
}

/// `--x0` first, then seeded points in the ball of radius `cfg.radius` around
/// `center`; entries from `nonneg_from` on are offset by `|u_i|` so seeded
/// multipliers stay nonnegative.
fn start_points(cfg: &Config, center: &DVector<f64>, nonneg_from: Option<usize>) -> Result<Vec<DVector<f64>>, CliError> {
    let dim = center.len();
    let mut starts = Vec::with_capacity(cfg.starts);
    if let Some(x0) = &cfg.x0 {
        if x0.len() != dim {
            return Err(CliError::Usage(format!("x0 has {} entries, expected {dim}", x0.len())));
        }
        starts.push(DVector::from_column_slice(x0));
    }
    let mut rng = sampling::rng(cfg.seed);
    while starts.len() < cfg.starts {
        let mut u = sampling::in_ball(&mut rng, dim, cfg.radius);
        if let Some(k) = nonneg_from {
            u.rows_mut(k, dim - k).apply(|v| *v = v.abs());
        }
        starts.push(center + u);
    }
    Ok(starts)
}

fn solve_options(cfg: &Config, root: &DVector<f64>) -> SolveOptions {
    SolveOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        rank_tol: cfg.rank_tol,
        ..SolveOptions::default()
    }
    .with_root(root.clone())
}

#[derive(Serialize)]
struct DecompositionEcho {
    order: usize,
    block_dims: Vec<usize>,
    blocks: Vec<Mat>,
    projectors: Vec<Mat>,
}

fn decomposition_echo(d: &Decomposition) -> DecompositionEcho {
    DecompositionEcho {
        order: d.order(),
        block_dims: d.blocks().iter().map(|b| b.dim()).collect(),
        blocks: d.blocks().iter().map(|b| rows(&b.basis().transpose())).collect(),
        projectors: d.projectors().iter().map(|p| rows(p.matrix())).collect(),
    }
}

#[derive(Serialize)]
struct RunEcho {
    start: Vec<f64>,
    iterations: usize,
    final_residual: f64,
    #[serde(flatten)]
    report: SolveReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    multipliers_nonnegative: Option<bool>,
}

#[derive(Serialize)]
struct SolveSummary {
    runs: usize,
    converged: usize,
    max_iterations: usize,
    /// Largest fitted rate constant over the converged runs.
    max_rate_constant: Option<f64>,
}

fn run_echo(start: &DVector<f64>, report: SolveReport) -> RunEcho {
    RunEcho {
        start: vecf(start),
        iterations: report.iterations(),
        final_residual: report.final_residual(),
        report,
        multipliers_nonnegative: None,
    }
}

fn summarize_runs(runs: &[RunEcho]) -> (SolveSummary, Option<String>) {
    let converged: Vec<&RunEcho> = runs
        .iter()
        .filter(|r| r.report.status == SolveStatus::Converged)
        .collect();
    let summary = SolveSummary {
        runs: runs.len(),
        converged: converged.len(),
        max_iterations: runs.iter().map(|r| r.iterations).max().unwrap_or(0),
        max_rate_constant: converged
            .iter()
            .filter_map(|r| r.report.rate.as_ref().map(|f| f.constant))
            .reduce(f64::max),
    };
    let failure = (summary.converged < summary.runs).then(|| {
        let statuses: Vec<String> = runs
            .iter()
            .enumerate()
            .filter(|(_, r)| r.report.status != SolveStatus::Converged)
            .map(|(i, r)| format!("run {i}: {:?}", r.report.status))
            .collect();
        format!(
            "{} of {} runs did not converge ({})",
            summary.runs - summary.converged,
            summary.runs,
            statuses.join(", ")
        )
    });
    (summary, failure)
}

// ---------------------------------------------------------------- analyze

#[derive(Serialize)]
struct DirectionEcho {
    h: Vec<f64>,
    hp_residual: f64,
    in_hp: bool,
    factor_operator: Mat,
    rank: usize,
    surjective: bool,
    right_inverse_norm: RightInverseNorm,
    remark: Option<RemarkCheck>,
}

fn direction_echo(d: &Decomposition, h: &DVector<f64>, cfg: &Config) -> Result<DirectionEcho, CliError> {
    let op = d.factor_operator(h)?;
    let check = d.is_p_regular_along(h, true)?;
    Ok(DirectionEcho {
        h: vecf(h),
        hp_residual: d.hp_residual(h),
        in_hp: d.hp_membership(h, cfg.sampling.cone_tol)?,
        factor_operator: rows(&op.matrix),
        rank: op.rank,
        surjective: op.surjective,
        right_inverse_norm: op.right_inverse_norm,
        remark: check.remark,
    })
}

#[derive(Serialize)]
struct ConeEcho {
    #[serde(flatten)]
    cone: ConeDescription,
    /// p-regularity along each direction.
    regular: Vec<bool>,
}

#[derive(Serialize)]
struct AnalyzePayload {
    system: SystemEcho,
    jacobian_rank: usize,
    singular: bool,
    decomposition: DecompositionEcho,
    direction: Option<DirectionEcho>,
    cone: ConeEcho,
    strong_regularity: StrongRegularity,
}

pub fn analyze(problem: &ProblemFile, cfg: &Config, timer: &mut Timer) -> Result<Outcome, CliError> {
    let sys = problem.system()?;
    let mut warnings = Vec::new();
    let system = system_echo(&sys, &mut warnings)?;
    let sing = sys.model.is_singular_at(&sys.point, cfg.rank_tol)?;
    let d = decompose(&sys.model, &sys.point, cfg)?;
    timer.mark("decomposition");
    let direction = direction(cfg, sys.model.n())?
        .map(|h| direction_echo(&d, &h, cfg))
        .transpose()?;
    let cone = tangent::compute_cone(&d, &cone_spec(cfg));
    let regular = cone
        .vectors()
        .iter()
        .map(|h| d.is_p_regular_along(h, false).map(|c| c.regular))
        .collect::<Result<Vec<_>, _>>()?;
    timer.mark("cone");
    let strong = d.strong_regularity_estimate(cfg.sampling.strong_alpha, cfg.sampling.strong_budget, cfg.seed);
    timer.mark("strong_regularity");
    let payload = AnalyzePayload {
        system,
        jacobian_rank: sing.rank,
        singular: sing.singular,
        decomposition: decomposition_echo(&d),
        direction,
        cone: ConeEcho { cone, regular },
        strong_regularity: strong,
    };
    Ok(outcome(&payload, warnings, None))
}

// ---------------------------------------------------------------- newton

#[derive(Serialize)]
struct NewtonPayload {
    system: SystemEcho,
    summary: SolveSummary,
    runs: Vec<RunEcho>,
}

pub fn newton(problem: &ProblemFile, cfg: &Config, timer: &mut Timer) -> Result<Outcome, CliError> {
    let sys = problem.system()?;
    let mut warnings = Vec::new();
    let system = system_echo(&sys, &mut warnings)?;
    let opts = solve_options(cfg, &sys.point);
    let runs = start_points(cfg, &sys.point, None)?
        .iter()
        .map(|x0| solvers::classical_newton(&sys.model, x0, &opts).map(|r| run_echo(x0, r)))
        .collect::<Result<Vec<_>, _>>()?;
    timer.mark("solve");
    let (summary, failure) = summarize_runs(&runs);
    Ok(outcome(&NewtonPayload { system, summary, runs }, warnings, failure))
}

// ---------------------------------------------------------------- pfnewton

#[derive(Serialize, Clone, Copy, PartialEq, Eq, Debug)]
#[serde(rename_all = "snake_case")]
enum DirectionSource {
    /// From `--h` or the problem definition.
    Configured,
    /// `h = (0, e_{I0})` from the activity classes.
    Activity,
    /// Best-conditioned factor matrix among seeded candidates.
    Selected,
}

#[derive(Serialize)]
struct ChainEcho {
    h: Vec<f64>,
    h_source: DirectionSource,
    order: usize,
    image_dims: Vec<usize>,
    bar_projectors: Vec<Mat>,
    combined: Vec<Mat>,
    factor_matrix: Mat,
    determinant: f64,
    condition: f64,
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let s = linalg::singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// The candidate (cone samples, then seeded unit vectors) whose chain has the
/// best-conditioned factor matrix.
fn select_direction(sys: &ResolvedSystem, p: usize, cfg: &Config) -> Result<DVector<f64>, CliError> {
    let n = sys.model.n();
    let mut candidates = decompose(&sys.model, &sys.point, cfg)
        .map(|d| d.hp_sample(&cone_spec(cfg)))
        .unwrap_or_default();
    let mut rng = sampling::rng(cfg.seed);
    candidates.extend((0..cfg.sampling.direction_candidates).map(|_| sampling::unit_vector(&mut rng, n)));
    candidates
        .into_iter()
        .filter_map(|h| {
            let chain = build_newton_chain(&sys.model, &sys.point, &h, p, cfg.rank_tol).ok()?;
            Some((condition(&chain.factor_matrix), h))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, h)| h)
        .ok_or_else(|| CliError::Numeric(format!("no sampled direction gives a nonsingular {p}-factor matrix")))
}

fn chain_echo(chain: &NewtonChain, source: DirectionSource) -> ChainEcho {
    ChainEcho {
        h: vecf(&chain.direction),
        h_source: source,
        order: chain.order,
        image_dims: chain.images.iter().map(|s| s.dim()).collect(),
        bar_projectors: chain.bar_projectors.iter().map(rows).collect(),
        combined: chain.combined.iter().map(rows).collect(),
        factor_matrix: rows(&chain.factor_matrix),
        determinant: chain.factor_matrix.determinant(),
        condition: condition(&chain.factor_matrix),
    }
}

#[derive(Serialize)]
struct PfNewtonPayload {
    system: SystemEcho,
    chain: ChainEcho,
    summary: SolveSummary,
    runs: Vec<RunEcho>,
}

pub fn pfnewton(problem: &ProblemFile, cfg: &Config, timer: &mut Timer) -> Result<Outcome, CliError> {
    let sys = problem.system()?;
    let mut warnings = Vec::new();
    let system = system_echo(&sys, &mut warnings)?;
    if sys.model.m() != sys.model.n() {
        return Err(pfactor::Error::NotSquare {
            rows: sys.model.m(),
            cols: sys.model.n(),
        }
        .into());
    }
    let p = match cfg.p {
        Some(p) => p,
        None => decompose(&sys.model, &sys.point, cfg)?.order(),
    }
    .max(2);
    let (h, source) = match (direction(cfg, sys.model.n())?, &sys.h) {
        (Some(h), _) => (h, DirectionSource::Configured),
        (None, Some(h)) => (h.clone(), DirectionSource::Activity),
        (None, None) => (select_direction(&sys, p, cfg)?, DirectionSource::Selected),
    };
    let chain = build_newton_chain(&sys.model, &sys.point, &h, p, cfg.rank_tol)?;
    timer.mark("chain");
    let opts = solve_options(cfg, &sys.point);
    let runs = start_points(cfg, &sys.point, None)?
        .iter()
        .map(|x0| solvers::pfactor_newton(&sys.model, x0, &chain, &opts).map(|r| run_echo(x0, r)))
        .collect::<Result<Vec<_>, _>>()?;
    timer.mark("solve");
    let (summary, failure) = summarize_runs(&runs);
    let payload = PfNewtonPayload {
        system,
        chain: chain_echo(&chain, source),
        summary,
        runs,
    };
    Ok(outcome(&payload, warnings, failure))
}

// ---------------------------------------------------------------- optcheck

#[derive(Serialize)]
struct ClassicalEcho {
    multiplier: Vec<f64>,
    residual: f64,
}

#[derive(Serialize)]
struct OptcheckPayload {
    objective: String,
    constraints: Vec<String>,
    point: Vec<f64>,
    classical: ClassicalEcho,
    decomposition: Option<DecompositionEcho>,
    direction: Option<LagrangeCertificate>,
    report: OptimalityReport,
}

pub fn optcheck(problem: &ProblemFile, cfg: &Config, timer: &mut Timer) -> Result<Outcome, CliError> {
    let ep = problem.equality_problem()?;
    let decomposition = ep
        .constraints()
        .map(|c| decompose(c, ep.point(), cfg))
        .transpose()?;
    timer.mark("decomposition");
    let (multiplier, residual) = ep.classical_multiplier()?;
    let options = CertifyOptions {
        tol: cfg.tol,
        alpha_floor: cfg.sampling.sufficiency_floor,
        cone: cone_spec(cfg),
    };
    let direction = direction(cfg, ep.n())?
        .map(|h| optimality::certify_direction(&ep, decomposition.as_ref(), &h, &options))
        .transpose()?;
    let report = optimality::certify(&ep, decomposition.as_ref(), &options)?;
    timer.mark("certificates");
    let mut warnings = Vec::new();
    if decomposition.as_ref().is_some_and(|d| d.order() > 2) {
        warnings.push("multipliers are split across the Y_k blocks by the minimal-norm choice".into());
    }
    let payload = OptcheckPayload {
        objective: ep.objective().system().to_strings().remove(0),
        constraints: ep.constraints().map(|c| c.system().to_strings()).unwrap_or_default(),
        point: vecf(ep.point()),
        classical: ClassicalEcho {
            multiplier: vecf(&multiplier),
            residual,
        },
        decomposition: decomposition.as_ref().map(decomposition_echo),
        direction,
        report,
    };
    Ok(outcome(&payload, warnings, None))
}

// ---------------------------------------------------------------- conlag

#[derive(Serialize)]
struct LemmaEcho {
    active_gradient_rank: usize,
    cqc: bool,
    cone_min_curvature: f64,
    cone_positive: bool,
    cone_samples: usize,
    extreme_rays: usize,
    phi_prime: Mat,
    phi_prime_rank: usize,
    determinant: f64,
    nonsingular: bool,
    v: Mat,
    q: Mat,
    d_n: Vec<f64>,
    block_match_error: f64,
}

impl From<LemmaCertificate> for LemmaEcho {
    fn from(c: LemmaCertificate) -> Self {
        Self {
            active_gradient_rank: c.active_gradient_rank,
            cqc: c.cqc,
            cone_min_curvature: c.cone_min_curvature,
            cone_positive: c.cone_positive,
            cone_samples: c.cone_samples,
            extreme_rays: c.extreme_rays,
            phi_prime: rows(&c.phi_prime),
            phi_prime_rank: c.phi_prime_rank,
            determinant: c.determinant,
            nonsingular: c.nonsingular,
            v: rows(&c.v),
            q: rows(&c.q),
            d_n: c.d_n,
            block_match_error: c.block_match_error,
        }
    }
}

#[derive(Serialize)]
struct ConlagPayload {
    variables: Vec<String>,
    components: Vec<String>,
    point: Vec<f64>,
    classification: Classification,
    h: Vec<f64>,
    lemma: LemmaEcho,
    summary: SolveSummary,
    runs: Vec<RunEcho>,
}

pub fn conlag(problem: &ProblemFile, cfg: &Config, timer: &mut Timer) -> Result<Outcome, CliError> {
    let cp = problem.constrained_problem()?;
    let system = cp.build_system()?;
    let (n, m) = (cp.n(), cp.m());
    let x = problem.point_vector();
    let lambda = problem.multiplier_vector();
    let classes = conlag::classify(&cp, &x, &lambda, cfg.feasibility_tol)?;
    let mut warnings = Vec::new();
    let h = match direction(cfg, n + m)? {
        Some(h) => h,
        None => match conlag::build_h(n, m, &classes) {
            Ok(h) => h,
            Err(pfactor::Error::Nondegenerate) => {
                warnings.push("no weakly active constraints: h = 0 and the iteration is classical Newton on G".into());
                DVector::zeros(n + m)
            }
            Err(e) => return Err(e.into()),
        },
    };
    let w_star = system.join(&x, &lambda)?;
    let options = LemmaOptions {
        seed: cfg.seed,
        cone_samples: cfg.sampling.lemma_cone_samples,
        rank_tol: cfg.rank_tol,
        ..LemmaOptions::default()
    };
    let lemma = conlag::lemma_certificate(&system, &x, &lambda, &classes, &h, &options)?;
    if !lemma.nonsingular {
        warnings.push("Phi'(w*) is singular: quadratic convergence is not expected".into());
    }
    timer.mark("lemma");
    let opts = solve_options(cfg, &w_star);
    let runs = start_points(cfg, &w_star, Some(n))?
        .iter()
        .map(|w0| {
            conlag::two_factor_solve(&system, w0, &h, &opts).map(|r| {
                let last = DVector::from_column_slice(&r.final_point);
                let mut echo = run_echo(w0, r);
                echo.multipliers_nonnegative = Some(conlag::multipliers_nonnegative(&system, &last, cfg.feasibility_tol));
                echo
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    timer.mark("solve");
    let (summary, failure) = summarize_runs(&runs);
    let payload = ConlagPayload {
        variables: system.model().system().names().to_vec(),
        components: system.model().system().to_strings(),
        point: vecf(&w_star),
        classification: classes,
        h: vecf(&h),
        lemma: lemma.into(),
        summary,
        runs,
    };
    Ok(outcome(&payload, warnings, failure))
}

// ---------------------------------------------------------------- tangent

#[derive(Serialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum TraceRole {
    Cone,
    Probe,
}

#[derive(Serialize)]
struct TraceEcho {
    role: TraceRole,
    /// Smallest angle to a cone direction.
    cone_angle: f64,
    #[serde(flatten)]
    trace: CurveTrace,
}

#[derive(Serialize)]
struct Agreement {
    cone_directions: usize,
    cone_confirmed: usize,
    probes_confirmed: usize,
    probes_rejected: usize,
    /// Every cone direction is confirmed and a probe is confirmed exactly when it lies on the cone.
    consistent: bool,
}

#[derive(Serialize)]
struct TangentPayload {
    system: SystemEcho,
    decomposition: DecompositionEcho,
    cone: ConeDescription,
    agreement: Agreement,
    traces: Vec<TraceEcho>,
    distance: DistanceEstimate,
}

pub fn tangent(problem: &ProblemFile, cfg: &Config, timer: &mut Timer) -> Result<Outcome, CliError> {
    let sys = problem.system()?;
    let mut warnings = Vec::new();
    let system = system_echo(&sys, &mut warnings)?;
    let d = decompose(&sys.model, &sys.point, cfg)?;
    let cone = tangent::compute_cone(&d, &cone_spec(cfg));
    timer.mark("cone");
    let cone_dirs = cone.vectors();
    let mut roles: Vec<(TraceRole, DVector<f64>)> = cone_dirs.iter().map(|h| (TraceRole::Cone, h.clone())).collect();
    if let Some(h) = direction(cfg, sys.model.n())? {
        roles.push((TraceRole::Probe, h));
    }
    let options = TraceOptions {
        grid: cfg.sampling.trace_grid.clone(),
        ..TraceOptions::default()
    };
    let traces = roles
        .iter()
        .map(|(role, h)| {
            let trace = tangent::trace_curve(&sys.model, &sys.point, h, &options)?;
            let cone_angle = cone_dirs
                .iter()
                .map(|c| angle_between(c, h))
                .fold(f64::INFINITY, f64::min);
            Ok(TraceEcho {
                role: *role,
                cone_angle,
                trace,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    timer.mark("traces");
    let is_probe = |t: &&TraceEcho| matches!(t.role, TraceRole::Probe);
    let cone_confirmed = traces.iter().filter(|t| !is_probe(t) && t.trace.confirmed).count();
    let probes_confirmed = traces.iter().filter(is_probe).filter(|t| t.trace.confirmed).count();
    let agreement = Agreement {
        cone_directions: cone_dirs.len(),
        cone_confirmed,
        probes_confirmed,
        probes_rejected: traces.iter().filter(is_probe).count() - probes_confirmed,
        consistent: cone_confirmed == cone_dirs.len()
            && traces
                .iter()
                .filter(is_probe)
                .all(|t| t.trace.confirmed == (t.cone_angle <= CONE_MATCH_ANGLE)),
    };
    if !agreement.consistent {
        warnings.push("traced curves and the sampled cone disagree".into());
    }
    let distance = tangent::distance_estimate_check(
        &d,
        &DistanceOptions {
            radii: cfg.sampling.distance_radii.clone(),
            directions: cfg.sampling.distance_directions,
            seed: cfg.seed,
            ..DistanceOptions::default()
        },
    )?;
    timer.mark("distance");
    let payload = TangentPayload {
        system,
        decomposition: decomposition_echo(&d),
        cone,
        agreement,
        traces,
        distance,
    };
    Ok(outcome(&payload, warnings, None))
}

// ---------------------------------------------------------------- list

#[derive(Serialize)]
struct ListPayload {
    problems: Vec<BuiltinProblem>,
}

pub fn list() -> Outcome {
    outcome(
        &ListPayload {
            problems: load_registry(),
        },
        Vec::new(),
        None,
    )
}
