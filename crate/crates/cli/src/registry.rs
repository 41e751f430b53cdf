//! Built-in problems.

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::problem::{Constraint, ProblemFile, Tolerances};

/// A value a run on this problem is expected to reproduce.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Expected {
    pub subcommand: &'static str,
    pub quantity: &'static str,
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BuiltinProblem {
    pub aliases: Vec<&'static str>,
    #[serde(flatten)]
    pub file: ProblemFile,
    pub expected: Vec<Expected>,
}

fn vars(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn expected(subcommand: &'static str, quantity: &'static str, value: Value) -> Expected {
    Expected {
        subcommand,
        quantity,
        value,
    }
}

fn base(name: &str, variables: &[&str], point: Vec<f64>) -> ProblemFile {
    ProblemFile {
        name: name.into(),
        variables: vars(variables),
        equations: Vec::new(),
        objective: None,
        constraints: Vec::new(),
        point,
        multipliers: None,
        p: None,
        h: None,
        tolerances: Tolerances::default(),
        seed: None,
        description: None,
    }
}

fn ex1() -> BuiltinProblem {
    let mut f = base("ex1", &["x1", "x2"], vec![0.0, 0.0]);
    f.equations = strings(&["x1 + x2", "x1*x2"]);
    f.p = Some(2);
    f.h = Some(vec![1.0, -1.0]);
    f.description = Some("Two equations with a double root at the origin; classical Newton is unstable there.".into());
    BuiltinProblem {
        aliases: vec![],
        file: f,
        expected: vec![
            expected("analyze", "order", json!(2)),
            expected("analyze", "blocks", json!([[1.0, 0.0], [0.0, 1.0]])),
            expected("analyze", "hp_empty", json!(true)),
            expected("pfnewton", "factor_matrix", json!([[1.0, 1.0], [-1.0, 1.0]])),
            expected("newton", "first_iterate_at_t", json!({"t": 1e-5, "x1": [-1e5 - 1e-5, 1e5 + 1e-5]})),
        ],
    }
}

fn reddien() -> BuiltinProblem {
    let mut f = base("reddien", &["x1", "x2"], vec![0.0, 0.0]);
    f.equations = strings(&["x1 + x1*x2 + x2^2", "x1^2 - 2*x1 + x2^2"]);
    f.p = Some(2);
    // Ker F'(0) = span{(0,1)}; the factor matrix along it has determinant 6.
    f.h = Some(vec![0.0, 1.0]);
    f.description = Some("Singular root with a one-dimensional kernel span{(0,1)} and image span{(1,-2)}.".into());
    BuiltinProblem {
        aliases: vec![],
        file: f,
        expected: vec![
            expected("analyze", "jacobian_rank", json!(1)),
            expected("pfnewton", "factor_matrix", json!([[1.8, 2.4], [-1.6, 1.2]])),
        ],
    }
}

fn phi3() -> BuiltinProblem {
    let mut f = base("phi3", &["x1", "x2"], vec![0.0, 0.0]);
    f.objective = Some("x1^2 + x1^2*x2 + x2^4".into());
    f.p = Some(3);
    f.h = Some(vec![1.0, 1.0]);
    f.description =
        Some("Unconstrained objective whose gradient system is 3-regular at the origin along (1,1).".into());
    BuiltinProblem {
        aliases: vec![],
        file: f,
        expected: vec![
            expected("pfnewton", "bar_projectors", json!([[[0.0, 0.0], [0.0, 1.0]], [[0.5, -0.5], [-0.5, 0.5]]])),
            expected("pfnewton", "combined", json!([[[0.5, -0.5], [-0.5, 1.5]], [[0.0, -0.5], [0.0, 0.5]]])),
            expected("pfnewton", "factor_matrix", json!([[2.0, -11.0], [2.0, 11.0]])),
            expected("pfnewton", "max_ratio_bound", json!(10.0)),
        ],
    }
}

fn eq20a() -> BuiltinProblem {
    let mut f = base("eq20a", &["x1", "x2", "x3"], vec![0.0, 0.0, 0.0]);
    f.objective = Some("x2^2 + x3".into());
    f.equations = strings(&["x1^2 - x2^2 + x3^2", "x1^2 - x2^2 + x3^2 + x2*x3"]);
    f.p = Some(2);
    f.h = Some(vec![1.0, 1.0, 0.0]);
    f.description = Some("Degenerate equality-constrained minimum at the origin; F'(0) = 0.".into());
    let r = std::f64::consts::FRAC_1_SQRT_2;
    BuiltinProblem {
        aliases: vec!["eq20a_F"],
        file: f,
        expected: vec![
            expected("analyze", "order", json!(2)),
            expected("analyze", "cone", json!([[r, r, 0.0], [r, -r, 0.0], [-r, r, 0.0], [-r, -r, 0.0]])),
            expected("optcheck", "multiplier", json!([1.0, -1.0])),
            expected("optcheck", "second_order_value", json!(4.0 / 3.0)),
            expected("optcheck", "verdict", json!("necessary_and_sufficient")),
            expected("tangent", "rejected_direction", json!([0.0, 0.0, 1.0])),
        ],
    }
}

fn planar() -> BuiltinProblem {
    let mut f = base("planar", &["x1", "x2"], vec![0.0, 0.0]);
    f.equations = strings(&["x1^2 - x2^2"]);
    f.p = Some(2);
    f.description = Some("A single equation whose zero set is the two lines x1 = +-x2.".into());
    let r = std::f64::consts::FRAC_1_SQRT_2;
    BuiltinProblem {
        aliases: vec![],
        file: f,
        expected: vec![expected(
            "tangent",
            "cone",
            json!([[r, r], [r, -r], [-r, r], [-r, -r]]),
        )],
    }
}

fn ex9() -> BuiltinProblem {
    let mut f = base("ex_9", &["x1", "x2"], vec![0.0, 0.0]);
    f.objective = Some("x1^2 + x2^2 + 4*x1*x2".into());
    f.constraints = vec![Constraint::ge("x1"), Constraint::ge("x2")];
    f.multipliers = Some(vec![0.0, 0.0]);
    f.p = Some(2);
    f.h = Some(vec![0.0, 0.0, 1.0, 1.0]);
    f.description = Some("Both constraints weakly active at the minimiser: x* = 0 with zero multipliers.".into());
    BuiltinProblem {
        aliases: vec!["ex9"],
        file: f,
        expected: vec![
            expected("conlag", "h", json!([0.0, 0.0, 1.0, 1.0])),
            expected(
                "conlag",
                "phi_prime",
                json!([[2.0, 4.0, -1.0, 0.0], [4.0, 2.0, 0.0, -1.0], [-1.0, 0.0, 0.0, 0.0], [0.0, -1.0, 0.0, 0.0]]),
            ),
            expected("conlag", "determinant", json!(1.0)),
        ],
    }
}

/// All built-in problems in listing order.
pub fn load_registry() -> Vec<BuiltinProblem> {
    vec![ex1(), reddien(), phi3(), eq20a(), planar(), ex9()]
}

/// Looks a problem up by name or alias.
pub fn find(name: &str) -> Result<BuiltinProblem, CliError> {
    load_registry()
        .into_iter()
        .find(|b| b.file.name == name || b.aliases.contains(&name))
        .ok_or_else(|| {
            let known: Vec<String> = load_registry().into_iter().map(|b| b.file.name).collect();
            CliError::Problem(format!("unknown problem `{name}`; built-ins are {}", known.join(", ")))
        })
}
