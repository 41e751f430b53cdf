use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("problem definition error: {0}")]
    Problem(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Output(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Problem(_) => 4,
        }
    }
}

/// Classifies a library error raised after the problem has been validated.
impl From<pfactor::Error> for CliError {
    fn from(e: pfactor::Error) -> Self {
        use pfactor::Error as E;
        let msg = e.to_string();
        match e {
            E::Expr(_) | E::Infeasible { .. } => CliError::Problem(msg),
            E::DimensionMismatch { .. }
            | E::ZeroDirection
            | E::OrderTooHigh { .. }
            | E::NotSquare { .. }
            | E::InvalidArgument(_) => CliError::Usage(msg),
            E::DecompositionIncomplete { .. }
            | E::SingularFactorMatrix { .. }
            | E::TooFewIterates { .. }
            | E::Nondegenerate => CliError::Numeric(msg),
        }
    }
}
