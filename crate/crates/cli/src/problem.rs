//! Problem files and their resolution into mappings.

use std::path::Path;

use nalgebra::DVector;
use pfactor::conlag::{self, ConstrainedProblem, ModLagSystem};
use pfactor::expr::{parse_expr, PolySystem};
use pfactor::optimality::EqualityProblem;
use pfactor::MappingModel;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Default feasibility tolerance for candidate points.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

/// `expr <= 0` or `expr >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraint {
    pub expr: String,
    #[serde(default = "default_sense")]
    pub sense: Sense,
}

fn default_sense() -> Sense {
    Sense::Le
}

impl Constraint {
    pub fn le(expr: &str) -> Self {
        Self {
            expr: expr.into(),
            sense: Sense::Le,
        }
    }

    pub fn ge(expr: &str) -> Self {
        Self {
            expr: expr.into(),
            sense: Sense::Ge,
        }
    }

    /// The constraint rewritten as `g(x) <= 0`.
    fn as_le(&self) -> String {
        match self.sense {
            Sense::Le => self.expr.clone(),
            Sense::Ge => format!("-({})", self.expr),
        }
    }
}

/// Per-problem overrides of the command-line defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

impl Tolerances {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

/// A problem as read from JSON. Equations define `F`; an objective with
/// equations is an equality-constrained problem, an objective with
/// `constraints` an inequality-constrained one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub name: String,
    pub variables: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub equations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<Constraint>,
    /// Candidate point `x*`.
    pub point: Vec<f64>,
    /// Multipliers at `x*` for the inequality constraints; zero by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multipliers: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Tolerances::is_empty")]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

/// Which mapping the system-level subcommands work on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    /// The equations `F(x) = 0`.
    Equations,
    /// `G(x, l) = 0` of the modified Lagrangian.
    ModifiedLagrangian,
    /// `phi'(x) = 0` for an unconstrained objective.
    Gradient,
}

/// A square-or-not polynomial system with its base point and default direction.
#[derive(Clone, Debug)]
pub struct ResolvedSystem {
    pub kind: SystemKind,
    pub model: MappingModel,
    pub point: DVector<f64>,
    pub h: Option<DVector<f64>>,
}

impl ResolvedSystem {
    pub fn variables(&self) -> Vec<String> {
        self.model.system().names().to_vec()
    }

    pub fn components(&self) -> Vec<String> {
        self.model.system().to_strings()
    }
}

fn problem_err(e: impl std::fmt::Display) -> CliError {
    CliError::Problem(e.to_string())
}

impl ProblemFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Problem(format!("cannot read {}: {e}", path.display())))?;
        let file: ProblemFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Problem(format!("malformed problem file {}: {e}", path.display())))?;
        file.validate()?;
        Ok(file)
    }

    pub fn n(&self) -> usize {
        self.variables.len()
    }

    fn var_refs(&self) -> Vec<&str> {
        self.variables.iter().map(String::as_str).collect()
    }

    /// Structural checks plus a parse of every expression.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.variables.is_empty() {
            return Err(CliError::Problem("no variables declared".into()));
        }
        if self.point.len() != self.n() {
            return Err(CliError::Problem(format!(
                "point has {} entries for {} variables",
                self.point.len(),
                self.n()
            )));
        }
        if self.equations.is_empty() && self.objective.is_none() {
            return Err(CliError::Problem("a problem needs equations or an objective".into()));
        }
        if !self.constraints.is_empty() && self.objective.is_none() {
            return Err(CliError::Problem("inequality constraints need an objective".into()));
        }
        if let Some(mult) = &self.multipliers {
            if mult.len() != self.constraints.len() {
                return Err(CliError::Problem(format!(
                    "{} multipliers for {} constraints",
                    mult.len(),
                    self.constraints.len()
                )));
            }
        }
        if self.p == Some(0) {
            return Err(CliError::Problem("p must be at least 1".into()));
        }
        self.equation_model()?;
        self.objective_model()?;
        self.constraint_model()?;
        let system = self.system()?;
        if let Some(h) = &self.h {
            if h.len() != system.model.n() {
                return Err(CliError::Problem(format!(
                    "h has {} entries, the system has {} unknowns",
                    h.len(),
                    system.model.n()
                )));
            }
        }
        Ok(())
    }

    pub fn point_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.point)
    }

    pub fn multiplier_vector(&self) -> DVector<f64> {
        match &self.multipliers {
            Some(m) => DVector::from_column_slice(m),
            None => DVector::zeros(self.constraints.len()),
        }
    }

    pub fn feasibility_tol(&self) -> f64 {
        self.tolerances.feasibility_tol.unwrap_or(FEASIBILITY_TOL)
    }

    pub fn equation_model(&self) -> Result<Option<MappingModel>, CliError> {
        if self.equations.is_empty() {
            return Ok(None);
        }
        MappingModel::parse(&self.equations, &self.var_refs())
            .map(Some)
            .map_err(problem_err)
    }

    pub fn objective_model(&self) -> Result<Option<MappingModel>, CliError> {
        match &self.objective {
            None => Ok(None),
            Some(obj) => MappingModel::parse(&[obj], &self.var_refs())
                .map(Some)
                .map_err(|e| CliError::Problem(format!("objective: {e}"))),
        }
    }

    /// Inequality constraints as `g(x) <= 0`.
    pub fn constraint_model(&self) -> Result<Option<MappingModel>, CliError> {
        if self.constraints.is_empty() {
            return Ok(None);
        }
        let g: Vec<String> = self.constraints.iter().map(Constraint::as_le).collect();
        MappingModel::parse(&g, &self.var_refs())
            .map(Some)
            .map_err(|e| CliError::Problem(format!("constraints: {e}")))
    }

    fn objective_or_err(&self) -> Result<MappingModel, CliError> {
        self.objective_model()?
            .ok_or_else(|| CliError::Problem(format!("problem `{}` has no objective", self.name)))
    }

    /// The equality-constrained problem `min phi s.t. F = 0` at `x*`.
    pub fn equality_problem(&self) -> Result<EqualityProblem, CliError> {
        if !self.constraints.is_empty() {
            return Err(CliError::Problem(format!(
                "problem `{}` has inequality constraints; use conlag",
                self.name
            )));
        }
        EqualityProblem::new(
            self.objective_or_err()?,
            self.equation_model()?,
            self.point_vector(),
            self.feasibility_tol(),
        )
        .map_err(problem_err)
    }

    /// The inequality-constrained problem `min phi s.t. g <= 0`.
    pub fn constrained_problem(&self) -> Result<ConstrainedProblem, CliError> {
        let g = self
            .constraint_model()?
            .ok_or_else(|| CliError::Problem(format!("problem `{}` has no inequality constraints", self.name)))?;
        ConstrainedProblem::new(self.objective_or_err()?, g).map_err(problem_err)
    }

    pub fn modlag_system(&self) -> Result<ModLagSystem, CliError> {
        self.constrained_problem()?.build_system().map_err(problem_err)
    }

    /// Equations when present, else the modified-Lagrangian system of the
    /// inequality constraints at `(x*, l*)`, else the objective's gradient.
    pub fn system(&self) -> Result<ResolvedSystem, CliError> {
        let file_h = self.h.as_ref().map(|h| DVector::from_column_slice(h));
        if let Some(model) = self.equation_model()? {
            return Ok(ResolvedSystem {
                kind: SystemKind::Equations,
                model,
                point: self.point_vector(),
                h: file_h,
            });
        }
        if !self.constraints.is_empty() {
            let system = self.modlag_system()?;
            let x = self.point_vector();
            let lambda = self.multiplier_vector();
            let h = match file_h {
                Some(h) => Some(h),
                None => conlag::classify_and_build_h(system.problem(), &x, &lambda, self.feasibility_tol())
                    .ok()
                    .map(|(_, h)| h),
            };
            return Ok(ResolvedSystem {
                kind: SystemKind::ModifiedLagrangian,
                point: system.join(&x, &lambda).map_err(problem_err)?,
                model: system.model().clone(),
                h,
            });
        }
        let objective = self.objective_or_err()?;
        let phi = &objective.system().components()[0];
        let gradient = PolySystem::new(self.variables.clone(), phi.gradient()).map_err(problem_err)?;
        Ok(ResolvedSystem {
            kind: SystemKind::Gradient,
            model: MappingModel::new(gradient),
            point: self.point_vector(),
            h: file_h,
        })
    }
}

/// Parses a comma-separated vector whose entries may be constant
/// expressions, e.g. `"1e-5+1e-15, -2"`.
pub fn parse_vector(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|part| {
            let part = part.trim();
            if part.is_empty() {
                return Err(CliError::Usage(format!("empty entry in vector `{text}`")));
            }
            if let Ok(v) = part.parse::<f64>() {
                return Ok(v);
            }
            parse_expr(part, &[])
                .map(|node| node.eval(&[]))
                .map_err(|e| CliError::Usage(format!("cannot read `{part}` as a number: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex9() -> ProblemFile {
        ProblemFile {
            name: "t".into(),
            variables: vec!["x1".into(), "x2".into()],
            equations: vec![],
            objective: Some("x1^2 + x2^2 + 4*x1*x2".into()),
            constraints: vec![Constraint::ge("x1"), Constraint::ge("x2")],
            point: vec![0.0, 0.0],
            multipliers: None,
            p: None,
            h: None,
            tolerances: Tolerances::default(),
            seed: None,
            description: None,
        }
    }

    #[test]
    fn vectors_accept_constant_expressions() {
        assert_eq!(parse_vector("1, -2.5,3e-1").unwrap(), vec![1.0, -2.5, 0.3]);
        assert_eq!(parse_vector("1e-5+1e-15,1e-5").unwrap(), vec![1e-5 + 1e-15, 1e-5]);
        assert_eq!(parse_vector("2^3").unwrap(), vec![8.0]);
        assert!(matches!(parse_vector("1,,2"), Err(CliError::Usage(_))));
        assert!(matches!(parse_vector("x1"), Err(CliError::Usage(_))));
    }

    #[test]
    fn ge_constraints_flip_sign() {
        let g = ex9().constraint_model().unwrap().unwrap();
        let val = g.evaluate(&DVector::from_column_slice(&[2.0, 3.0])).unwrap();
        assert_eq!(val.as_slice(), &[-2.0, -3.0]);
    }

    #[test]
    fn inequality_problem_resolves_to_modified_lagrangian() {
        let s = ex9().system().unwrap();
        assert_eq!(s.kind, SystemKind::ModifiedLagrangian);
        assert_eq!(s.model.n(), 4);
        assert_eq!(s.h.unwrap().as_slice(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn objective_alone_resolves_to_gradient() {
        let mut f = ex9();
        f.constraints.clear();
        let s = f.system().unwrap();
        assert_eq!(s.kind, SystemKind::Gradient);
        let j = s.model.jacobian(&DVector::zeros(2)).unwrap();
        assert_eq!(j.as_slice(), &[2.0, 4.0, 4.0, 2.0]);
    }

    #[test]
    fn validation_errors() {
        let mut f = ex9();
        f.point.push(1.0);
        assert!(matches!(f.validate(), Err(CliError::Problem(_))));
        let mut f = ex9();
        f.objective = Some("x1 + y".into());
        assert!(matches!(f.validate(), Err(CliError::Problem(_))));
        let mut f = ex9();
        f.h = Some(vec![1.0, 0.0]);
        assert!(matches!(f.validate(), Err(CliError::Problem(_))));
        assert!(serde_json::from_str::<ProblemFile>(r#"{"name":"a","variables":["x"],"point":[0],"bogus":1}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let f = ex9();
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.contains(r#""sense":">=""#));
        assert_eq!(serde_json::from_str::<ProblemFile>(&text).unwrap(), f);
    }
}
