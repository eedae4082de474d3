//! Sparse multivariate polynomials over `f64`: arithmetic, calculus, norms,
//! parsing and printing.

mod matrix;
mod monomial;
mod parse;
mod polynomial;

use thiserror::Error;

pub use matrix::MatrixPolynomial;
pub use monomial::{monomials_up_to, Monomial};
pub use polynomial::{default_names, Polynomial};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("variable count mismatch: {left} vs {right}")]
    VarCountMismatch { left: usize, right: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("variable index {index} out of range for {nvars} variables")]
    VariableOutOfRange { index: usize, nvars: usize },
    #[error("syntax error at position {pos}: {message}")]
    Parse { pos: usize, message: String },
    #[error("unknown variable '{name}' at position {pos}")]
    UnknownVariable { name: String, pos: usize },
}
