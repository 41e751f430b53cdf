use thiserror::Error;

use crate::expr::ExprError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("{what}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("the direction h must be nonzero")]
    ZeroDirection,
    #[error("order {requested} exceeds the mapping's maximum derivative order {max}")]
    OrderTooHigh { requested: usize, max: usize },
    #[error(
        "decomposition incomplete at order {p_cap}: block dimensions {block_dims:?} span {achieved} of {target}"
    )]
    DecompositionIncomplete {
        p_cap: usize,
        block_dims: Vec<usize>,
        achieved: usize,
        target: usize,
    },
    #[error("the p-factor matrix along h is singular (rank {rank} of {dim})")]
    SingularFactorMatrix { rank: usize, dim: usize },
    #[error("a square system is required, got {rows} equations in {cols} unknowns")]
    NotSquare { rows: usize, cols: usize },
    #[error("need at least {needed} iterates, got {found}")]
    TooFewIterates { needed: usize, found: usize },
    #[error("no weakly active constraints: the system is nondegenerate and classical Newton applies")]
    Nondegenerate,
    #[error("candidate point violates {what} by {violation:e}")]
    Infeasible { what: &'static str, violation: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}
