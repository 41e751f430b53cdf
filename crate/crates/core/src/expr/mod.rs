//! Polynomial expressions, the systems they define, and their exact
//! derivative tensors.
//!
//! Parsing produces an [`ExprNode`] tree which is expanded into a
//! [`Polynomial`]; derivatives of every order are then computed symbolically,
//! so the tensors handed to the rank decisions downstream carry no
//! differencing noise.

mod parse;
mod poly;
mod tensor;

use std::collections::BTreeMap;

use thiserror::Error;

pub use parse::parse_expr;
pub use poly::{Exponents, Polynomial};
pub use tensor::Tensor;

/// Highest derivative order available unless configured otherwise.
pub const DEFAULT_MAX_ORDER: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown variable `{name}` at position {position}")]
    UnknownVariable { name: String, position: usize },
    #[error("invalid exponent `{text}` at position {position}; exponents must be non-negative integers")]
    InvalidExponent { position: usize, text: String },
    #[error("component {index}: {source}")]
    Component {
        index: usize,
        #[source]
        source: Box<ExprError>,
    },
    #[error("a system needs at least one variable and one component")]
    EmptySystem,
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("invalid variable name `{0}`")]
    InvalidVariableName(String),
    #[error("derivative order {requested} is outside 1..={max}")]
    OrderOutOfRange { requested: usize, max: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot contract {copies} slots of an order-{order} tensor")]
    InvalidContraction { copies: usize, order: usize },
}

/// Expression tree produced by the parser.
#[derive(Clone, Debug, PartialEq)]
pub enum ExprNode {
    Constant(f64),
    Variable(usize),
    Sum(Vec<ExprNode>),
    Product(Vec<ExprNode>),
    Power(Box<ExprNode>, u32),
}

impl ExprNode {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ExprNode::Constant(c) => *c,
            ExprNode::Variable(i) => x[*i],
            ExprNode::Sum(terms) => terms.iter().map(|t| t.eval(x)).sum(),
            ExprNode::Product(factors) => factors.iter().map(|f| f.eval(x)).product(),
            ExprNode::Power(base, k) => base.eval(x).powi(*k as i32),
        }
    }

    /// Expands the tree into a flat polynomial.
    pub fn to_polynomial(&self, nvars: usize) -> Polynomial {
        match self {
            ExprNode::Constant(c) => Polynomial::constant(nvars, *c),
            ExprNode::Variable(i) => Polynomial::variable(nvars, *i),
            ExprNode::Sum(terms) => terms
                .iter()
                .fold(Polynomial::zero(nvars), |acc, t| acc.add(&t.to_polynomial(nvars))),
            ExprNode::Product(factors) => factors
                .iter()
                .fold(Polynomial::constant(nvars, 1.0), |acc, f| {
                    acc.mul(&f.to_polynomial(nvars))
                }),
            ExprNode::Power(base, k) => base.to_polynomial(nvars).pow(*k),
        }
    }
}

/// A polynomial map `F: R^n -> R^m`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolySystem {
    names: Vec<String>,
    components: Vec<Polynomial>,
    max_order: usize,
}

impl PolySystem {
    /// Assembles a system from already-expanded polynomials.
    pub fn new(names: Vec<String>, components: Vec<Polynomial>) -> Result<Self, ExprError> {
        if names.is_empty() || components.is_empty() {
            return Err(ExprError::EmptySystem);
        }
        validate_names(&names)?;
        for p in &components {
            if p.nvars() != names.len() {
                return Err(ExprError::DimensionMismatch {
                    expected: names.len(),
                    found: p.nvars(),
                });
            }
        }
        Ok(Self {
            names,
            components,
            max_order: DEFAULT_MAX_ORDER,
        })
    }

    /// Sets the highest derivative order [`PolySystem::differentiate`] will produce.
    pub fn with_max_order(mut self, max_order: usize) -> Self {
        self.max_order = max_order;
        self
    }

    pub fn nvars(&self) -> usize {
        self.names.len()
    }

    pub fn ncomponents(&self) -> usize {
        self.components.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        self.check_dim(x)?;
        Ok(self.components.iter().map(|p| p.eval(x)).collect())
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<(), ExprError> {
        if x.len() != self.nvars() {
            return Err(ExprError::DimensionMismatch {
                expected: self.nvars(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Component strings in the parser grammar.
    pub fn to_strings(&self) -> Vec<String> {
        self.components
            .iter()
            .map(|p| p.format_with(&self.names))
            .collect()
    }

    /// Symbolic `k`-th derivative.
    pub fn differentiate(&self, order: usize) -> Result<SymbolicDerivative, ExprError> {
        if order == 0 || order > self.max_order {
            return Err(ExprError::OrderOutOfRange {
                requested: order,
                max: self.max_order,
            });
        }
        let mut d = SymbolicDerivative::base(self);
        for _ in 0..order {
            d = d.next();
        }
        Ok(d)
    }

    /// `F^{(k)}(x)[h]^copies`, a tensor of order `k - copies`.
    pub fn contraction(
        &self,
        order: usize,
        x: &[f64],
        h: &[f64],
        copies: usize,
    ) -> Result<Tensor, ExprError> {
        self.check_dim(x)?;
        self.check_dim(h)?;
        if copies == 0 || copies > order {
            return Err(ExprError::InvalidContraction { copies, order });
        }
        Ok(self.differentiate(order)?.eval(x).contract(h, copies))
    }
}

/// Parses a list of expression strings over the declared variables.
pub fn parse_system<S: AsRef<str>>(
    equations: &[S],
    variables: &[String],
) -> Result<PolySystem, ExprError> {
    if equations.is_empty() || variables.is_empty() {
        return Err(ExprError::EmptySystem);
    }
    validate_names(variables)?;
    let components = equations
        .iter()
        .enumerate()
        .map(|(index, src)| {
            parse_expr(src.as_ref(), variables)
                .map(|node| node.to_polynomial(variables.len()))
                .map_err(|e| ExprError::Component {
                    index,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    PolySystem::new(variables.to_vec(), components)
}

fn validate_names(names: &[String]) -> Result<(), ExprError> {
    for (i, name) in names.iter().enumerate() {
        let mut chars = name.chars();
        let ok = chars
            .next()
            .is_some_and(|c| c.is_alphabetic() || c == '_')
            && chars.all(|c| c.is_alphanumeric() || c == '_');
        if !ok {
            return Err(ExprError::InvalidVariableName(name.clone()));
        }
        if names[..i].contains(name) {
            return Err(ExprError::DuplicateVariable(name.clone()));
        }
    }
    Ok(())
}

/// The `k`-th derivative of a system kept symbolically: for each component,
/// one polynomial per nondecreasing multi-index `i_1 <= .. <= i_k`.
#[derive(Clone, Debug)]
pub struct SymbolicDerivative {
    order: usize,
    nvars: usize,
    entries: Vec<BTreeMap<Vec<usize>, Polynomial>>,
}

impl SymbolicDerivative {
    /// Order zero: the components themselves.
    pub(crate) fn base(sys: &PolySystem) -> Self {
        let entries = sys
            .components
            .iter()
            .map(|p| BTreeMap::from([(Vec::new(), p.clone())]))
            .collect();
        Self {
            order: 0,
            nvars: sys.nvars(),
            entries,
        }
    }

    /// Derivative of one order higher.
    pub(crate) fn next(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|map| {
                let mut out = BTreeMap::new();
                for (index, poly) in map {
                    let first = index.last().copied().unwrap_or(0);
                    for var in first..self.nvars {
                        let d = poly.partial(var);
                        if d.is_zero() {
                            continue;
                        }
                        let mut key = index.clone();
                        key.push(var);
                        out.insert(key, d);
                    }
                }
                out
            })
            .collect();
        Self {
            order: self.order + 1,
            nvars: self.nvars,
            entries,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Evaluates into a dense tensor; every permutation of a multi-index
    /// receives the same value, so the result is symmetric by construction.
    pub fn eval(&self, x: &[f64]) -> Tensor {
        let n = self.nvars;
        let mut t = Tensor::zeros(self.entries.len(), n, self.order);
        let mut index = vec![0usize; self.order];
        let total = n.pow(self.order as u32);
        for (c, map) in self.entries.iter().enumerate() {
            if map.is_empty() {
                continue;
            }
            let values: BTreeMap<&Vec<usize>, f64> =
                map.iter().map(|(k, p)| (k, p.eval(x))).collect();
            for flat in 0..total {
                let mut rem = flat;
                for slot in (0..self.order).rev() {
                    index[slot] = rem % n;
                    rem /= n;
                }
                let mut key = index.clone();
                key.sort_unstable();
                if let Some(v) = values.get(&key) {
                    t.set(c, &index, *v);
                }
            }
        }
        t
    }
}
