//! Command-line flags and their resolution against problem defaults.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::CliError;
use crate::problem::{parse_vector, ProblemFile};

pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Parser)]
#[command(name = "pfactor", version, about = "Analyse and solve singular nonlinear systems through p-regularity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Singularity test, subspace decomposition, regularity along h and the H_p cone.
    Analyze(RunArgs),
    /// Classical Newton iteration.
    Newton(RunArgs),
    /// p-factor Newton iteration with its projector chain and rate estimates.
    Pfnewton(RunArgs),
    /// p-factor Lagrange optimality certificates for equality constraints.
    Optcheck(RunArgs),
    /// Inequality constraints: activity classes, Lemma certificate and the 2-factor method.
    Conlag(RunArgs),
    /// Tangent cone, traced solution curves and distance-estimate fits.
    Tangent(RunArgs),
    /// Built-in problems.
    List(OutputArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Analyze(_) => "analyze",
            Command::Newton(_) => "newton",
            Command::Pfnewton(_) => "pfnewton",
            Command::Optcheck(_) => "optcheck",
            Command::Conlag(_) => "conlag",
            Command::Tangent(_) => "tangent",
            Command::List(_) => "list",
        }
    }

    pub fn output(&self) -> &OutputArgs {
        match self {
            Command::Analyze(a)
            | Command::Newton(a)
            | Command::Pfnewton(a)
            | Command::Optcheck(a)
            | Command::Conlag(a)
            | Command::Tangent(a) => &a.output,
            Command::List(o) => o,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Json,
    Table,
    Csv,
}

#[derive(Debug, Clone, Args, Default)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Name or alias of a built-in problem.
    #[arg(long)]
    pub builtin: Option<String>,
    /// JSON problem file.
    #[arg(long)]
    pub problem: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: Source,
    /// Starting point, comma separated; entries may be constant expressions.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Direction h, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub h: Option<String>,
    /// Order p (the decomposition cap for analyses, the chain order for pfnewton).
    #[arg(long)]
    pub p: Option<usize>,
    /// Convergence tolerance (solvers) or first-order tolerance (optcheck).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Absolute singular-value cutoff for rank decisions.
    #[arg(long)]
    pub rank_tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, env = "PFACTOR_SEED")]
    pub seed: Option<u64>,
    /// Number of runs; starts beyond an explicit --x0 are drawn from the seed.
    #[arg(long, default_value_t = 1)]
    pub starts: usize,
    /// Radius of the ball around the root that seeded starts are drawn from.
    #[arg(long)]
    pub radius: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Fixed sampling constants, echoed so that a report documents everything
/// its numbers depend on.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplingEcho {
    pub cone_budget: usize,
    pub cone_tol: f64,
    pub cone_dedup_angle: f64,
    pub strong_alpha: f64,
    pub strong_budget: usize,
    pub direction_candidates: usize,
    /// Required `Lbar_p''[h]^2 / ||h||^2` for sufficiency.
    pub sufficiency_floor: f64,
    pub lemma_cone_samples: usize,
    pub trace_grid: Vec<f64>,
    pub distance_radii: Vec<f64>,
    pub distance_directions: usize,
}

impl Default for SamplingEcho {
    fn default() -> Self {
        Self {
            cone_budget: 200,
            cone_tol: 1e-8,
            cone_dedup_angle: 1e-3,
            strong_alpha: 0.1,
            strong_budget: 2000,
            direction_candidates: 64,
            sufficiency_floor: 1e-8,
            lemma_cone_samples: 1000,
            trace_grid: (3..=20).map(|j| 2f64.powi(-j)).collect(),
            distance_radii: vec![1e-2, 1e-3, 1e-4, 1e-5],
            distance_directions: 64,
        }
    }
}

/// Every setting a run depends on, after merging flags with problem defaults.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Config {
    pub seed: u64,
    pub tol: f64,
    pub rank_tol: Option<f64>,
    pub kernel_tol: f64,
    pub feasibility_tol: f64,
    pub max_iter: usize,
    pub p: Option<usize>,
    pub h: Option<Vec<f64>>,
    pub x0: Option<Vec<f64>>,
    pub starts: usize,
    pub radius: f64,
    pub sampling: SamplingEcho,
}

/// Per-subcommand defaults for `tol` and `radius`.
pub fn defaults_for(subcommand: &str) -> (f64, f64) {
    match subcommand {
        "optcheck" => (1e-9, 0.05),
        "conlag" => (1e-12, 0.1),
        _ => (1e-12, 0.05),
    }
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{name} must be positive and finite, got {v}")))
    }
}

impl Config {
    pub fn resolve(subcommand: &str, args: &RunArgs, problem: &ProblemFile) -> Result<Self, CliError> {
        let (tol_default, radius_default) = defaults_for(subcommand);
        let t = &problem.tolerances;
        let tol = positive("tol", args.tol.or(t.tol).unwrap_or(tol_default))?;
        let rank_tol = args.rank_tol.or(t.rank_tol).map(|v| positive("rank-tol", v)).transpose()?;
        let radius = positive("radius", args.radius.unwrap_or(radius_default))?;
        if args.starts == 0 {
            return Err(CliError::Usage("--starts must be at least 1".into()));
        }
        if args.p == Some(0) {
            return Err(CliError::Usage("--p must be at least 1".into()));
        }
        let h = match &args.h {
            Some(text) => Some(parse_vector(text)?),
            None => problem.h.clone(),
        };
        if h.as_ref().is_some_and(|h| h.iter().all(|&v| v == 0.0)) && subcommand != "conlag" {
            return Err(CliError::Usage("h must be nonzero".into()));
        }
        Ok(Self {
            seed: args.seed.or(problem.seed).unwrap_or(DEFAULT_SEED),
            tol,
            rank_tol,
            kernel_tol: t.kernel_tol.unwrap_or(1e-8),
            feasibility_tol: problem.feasibility_tol(),
            max_iter: args.max_iter.or(t.max_iter).unwrap_or(50),
            p: args.p.or(problem.p),
            h,
            x0: args.x0.as_deref().map(parse_vector).transpose()?,
            starts: args.starts,
            radius,
            sampling: SamplingEcho::default(),
        })
    }
}
