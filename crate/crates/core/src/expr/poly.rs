//! Sparse multivariate polynomials with `f64` coefficients.

use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Exponent vector of a monomial, one entry per variable.
pub type Exponents = Vec<u32>;

/// A polynomial in `nvars` variables stored as a map from exponent vectors to
/// nonzero coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Exponents, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, value: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], value);
        p
    }

    /// The polynomial `x_index`.
    pub fn variable(nvars: usize, index: usize) -> Self {
        assert!(index < nvars, "variable index {index} out of range");
        let mut exps = vec![0; nvars];
        exps[index] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(exps, 1.0);
        p
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs; like terms are merged.
    pub fn from_terms<I>(nvars: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Exponents, f64)>,
    {
        let mut p = Self::zero(nvars);
        for (exps, c) in terms {
            assert_eq!(exps.len(), nvars, "exponent vector has wrong length");
            p.add_term(exps, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, f64)> {
        self.terms.iter().map(|(e, c)| (e, *c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Largest variable index that occurs with a positive exponent.
    pub fn max_variable(&self) -> Option<usize> {
        self.terms
            .keys()
            .filter_map(|e| e.iter().rposition(|&k| k > 0))
            .max()
    }

    fn add_term(&mut self, exps: Exponents, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        let entry = self.terms.entry(exps);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = *o.get() + coeff;
                if sum == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), c * factor);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Self::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let exps = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(exps, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, exponent: u32) -> Self {
        let mut result = Self::constant(self.nvars, 1.0);
        let mut base = self.clone();
        let mut k = exponent;
        while k > 0 {
            if k & 1 == 1 {
                result = result.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// Partial derivative with respect to variable `index`.
    pub fn partial(&self, index: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            let k = e[index];
            if k == 0 {
                continue;
            }
            let mut exps = e.clone();
            exps[index] = k - 1;
            out.add_term(exps, c * f64::from(k));
        }
        out
    }

    /// Directional derivative `sum_i h_i * d/dx_i`.
    pub fn directional(&self, h: &[f64]) -> Self {
        assert_eq!(h.len(), self.nvars);
        let mut out = Self::zero(self.nvars);
        for (i, &hi) in h.iter().enumerate() {
            if hi != 0.0 {
                out = out.add(&self.partial(i).scale(hi));
            }
        }
        out
    }

    pub fn gradient(&self) -> Vec<Self> {
        (0..self.nvars).map(|i| self.partial(i)).collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nvars, "point has wrong dimension");
        self.terms
            .iter()
            .map(|(e, c)| c * monomial(e, x))
            .sum()
    }

    /// Sum of absolute values of the terms at `x`; the scale against which
    /// rounding in [`Polynomial::eval`] should be judged.
    pub fn abs_eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| (c * monomial(e, x)).abs())
            .sum()
    }

    /// Re-expresses the polynomial in a larger variable space; variable `i`
    /// becomes variable `placement[i]` of the new space.
    pub fn embed(&self, new_nvars: usize, placement: &[usize]) -> Self {
        assert_eq!(placement.len(), self.nvars);
        let mut out = Self::zero(new_nvars);
        for (e, c) in &self.terms {
            let mut exps = vec![0; new_nvars];
            for (i, &k) in e.iter().enumerate() {
                exps[placement[i]] += k;
            }
            out.add_term(exps, *c);
        }
        out
    }

    /// Renders the polynomial in the expression grammar accepted by the parser.
    pub fn format_with(&self, names: &[String]) -> String {
        assert_eq!(names.len(), self.nvars);
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        // Highest total degree first reads more naturally.
        let mut terms: Vec<_> = self.terms.iter().collect();
        terms.sort_by(|a, b| {
            let da: u32 = a.0.iter().sum();
            let db: u32 = b.0.iter().sum();
            db.cmp(&da).then_with(|| b.0.cmp(a.0))
        });
        for (idx, (exps, &coeff)) in terms.into_iter().enumerate() {
            let negative = coeff < 0.0;
            let magnitude = coeff.abs();
            if idx == 0 {
                if negative {
                    out.push('-');
                }
            } else {
                out.push_str(if negative { " - " } else { " + " });
            }
            let factors: Vec<String> = exps
                .iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(i, &k)| {
                    if k == 1 {
                        names[i].clone()
                    } else {
                        format!("{}^{}", names[i], k)
                    }
                })
                .collect();
            if factors.is_empty() {
                out.push_str(&format_number(magnitude));
            } else {
                if magnitude != 1.0 {
                    let _ = write!(out, "{}*", format_number(magnitude));
                }
                out.push_str(&factors.join("*"));
            }
        }
        out
    }
}

fn monomial(exps: &[u32], x: &[f64]) -> f64 {
    exps.iter()
        .zip(x)
        .filter(|(&k, _)| k > 0)
        .map(|(&k, &xi)| xi.powi(k as i32))
        .product()
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_number(value: f64) -> String {
    if value.fract() == 0.0 && value.abs() < 1e15 {
        format!("{}", value as i64)
    } else {
        format!("{value:?}")
    }
}
