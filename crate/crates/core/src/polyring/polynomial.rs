use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use super::matrix::MatrixPolynomial;
use super::monomial::Monomial;
use super::PolyError;

/// Sparse multivariate polynomial with `f64` coefficients.
///
/// Terms are kept in graded-lex order and no stored coefficient is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::monomial(nvars, Monomial::one(), c)
    }

    /// The polynomial `x_var`.
    ///
    /// # Panics
    ///
    /// Panics if `var >= nvars`.
    pub fn var(nvars: usize, var: usize) -> Self {
        assert!(var < nvars, "variable index {var} out of range for {nvars} variables");
        Self::monomial(nvars, Monomial::var(var), 1.0)
    }

    pub fn monomial(nvars: usize, mono: Monomial, coeff: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(mono, coeff);
        p
    }

    /// Builds a polynomial from `(monomial, coefficient)` pairs, summing repeats.
    pub fn from_terms(
        nvars: usize,
        terms: impl IntoIterator<Item = (Monomial, f64)>,
    ) -> Result<Self, PolyError> {
        let mut p = Self::zero(nvars);
        for (m, c) in terms {
            if let Some(v) = m.max_var() {
                if v >= nvars {
                    return Err(PolyError::VariableOutOfRange { index: v, nvars });
                }
            }
            p.add_term(m, c);
        }
        Ok(p)
    }

    pub(crate) fn add_term(&mut self, mono: Monomial, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        match self.terms.entry(mono) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let v = *e.get() + coeff;
                if v == 0.0 {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Total degree, or `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).max()
    }

    pub fn coeff(&self, mono: &Monomial) -> f64 {
        self.terms.get(mono).copied().unwrap_or(0.0)
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn support(&self) -> impl Iterator<Item = &Monomial> + '_ {
        self.terms.keys()
    }

    pub fn is_finite(&self) -> bool {
        self.terms.values().all(|c| c.is_finite())
    }

    /// The same polynomial viewed in `nvars` variables.
    pub fn with_nvars(&self, nvars: usize) -> Result<Self, PolyError> {
        if let Some(v) = self.terms.keys().filter_map(Monomial::max_var).max() {
            if v >= nvars {
                return Err(PolyError::VariableOutOfRange { index: v, nvars });
            }
        }
        Ok(Polynomial {
            nvars,
            terms: self.terms.clone(),
        })
    }

    fn check_same(&self, other: &Self) -> Result<(), PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::VarCountMismatch {
                left: self.nvars,
                right: other.nvars,
            });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), -c);
        }
        Ok(out)
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_same(other)?;
        let mut out = Self::zero(self.nvars);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.nvars);
        for (m, &c) in &self.terms {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::constant(self.nvars, 1.0);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    pub fn square(&self) -> Self {
        self * self
    }

    /// Value at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.terms.iter().fold(0.0, |a, (m, &c)| a + c * m.evaluate(x))
    }

    /// `∂f/∂x_var`.
    pub fn partial(&self, var: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (m, &c) in &self.terms {
            if let Some((e, d)) = m.derivative(var) {
                out.add_term(d, c * e as f64);
            }
        }
        out
    }

    pub fn gradient(&self) -> Vec<Polynomial> {
        (0..self.nvars).map(|i| self.partial(i)).collect()
    }

    /// Matrix of second partials. The lower triangle is a copy of the upper
    /// one, so the result is exactly symmetric.
    pub fn hessian(&self) -> MatrixPolynomial {
        let n = self.nvars;
        let grad = self.gradient();
        let mut h = MatrixPolynomial::zeros(n, n, n);
        for (i, gi) in grad.iter().enumerate() {
            for j in i..n {
                let d = gi.partial(j);
                if i != j {
                    h.set(j, i, d.clone());
                }
                h.set(i, j, d);
            }
        }
        h
    }

    /// `Σ_α |f_α|`.
    pub fn l1_norm(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a + c.abs())
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// Drops terms with `|c| <= tol`.
    pub fn prune(&self, tol: f64) -> Self {
        Polynomial {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.abs() > tol)
                .map(|(m, &c)| (m.clone(), c))
                .collect(),
        }
    }

    /// Maps variable `i` to `x_{i + offset}` in a ring of `nvars` variables.
    pub fn shift_vars(&self, offset: usize, nvars: usize) -> Result<Self, PolyError> {
        Polynomial::from_terms(nvars, self.terms.iter().map(|(m, &c)| (m.shift_vars(offset), c)))
    }

    /// Grammar string using the names `x1..xn`.
    pub fn format(&self) -> String {
        self.to_string()
    }

    /// Grammar string using custom variable names.
    pub fn format_with(&self, names: &[String]) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut s = String::new();
        for (k, (m, &c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_sign_negative();
            let mag = c.abs();
            if k == 0 {
                if neg {
                    s.push('-');
                }
            } else {
                s.push_str(if neg { " - " } else { " + " });
            }
            if m.is_one() {
                s.push_str(&format_coeff(mag));
            } else if mag == 1.0 {
                s.push_str(&m.display_with(names).to_string());
            } else {
                s.push_str(&format_coeff(mag));
                s.push('*');
                s.push_str(&m.display_with(names).to_string());
            }
        }
        s
    }
}

/// Shortest decimal that round-trips to the same `f64`.
/// Shortest representation that parses back to the same `f64`; exponent
/// form outside `[1e-5, 1e16)`.
fn format_coeff(c: f64) -> String {
    let a = c.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{c:e}")
    } else {
        format!("{c}")
    }
}

pub fn default_names(nvars: usize) -> Vec<String> {
    (1..=nvars).map(|i| format!("x{i}")).collect()
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format_with(&default_names(self.nvars)))
    }
}

macro_rules! forward_binop {
    ($tr:ident, $method:ident, $checked:ident) => {
        impl $tr<&Polynomial> for &Polynomial {
            type Output = Polynomial;
            /// # Panics
            ///
            /// Panics when the operands have different variable counts; use the
            /// `checked_*` method to get an error instead.
            fn $method(self, rhs: &Polynomial) -> Polynomial {
                self.$checked(rhs).expect("polynomial operands must share nvars")
            }
        }
        impl $tr<Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: Polynomial) -> Polynomial {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: &Polynomial) -> Polynomial {
                (&self).$method(rhs)
            }
        }
    };
}

forward_binop!(Add, add, checked_add);
forward_binop!(Sub, sub, checked_sub);
forward_binop!(Mul, mul, checked_mul);

impl Mul<f64> for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: f64) -> Polynomial {
        self.scale(rhs)
    }
}

impl Mul<f64> for Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: f64) -> Polynomial {
        self.scale(rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}
