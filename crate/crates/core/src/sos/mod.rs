//! Sum-of-squares and sos-convexity tests via Gram-matrix semidefinite
//! programs, with explicit square decompositions.
//!
//! A polynomial `f` of degree `2d` is a sum of squares iff there is a PSD
//! matrix `Q` with `f = mᵀ Q m` for the vector `m` of monomials of degree
//! `≤ d`. Each coefficient of `f` gives one linear constraint on `Q`.

mod newton;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::polyring::{monomials_up_to, MatrixPolynomial, Monomial, PolyError, Polynomial};
use crate::semidefinite::{self, SdpError, SdpOptions, SdpProblem, SdpStatus};

pub use newton::NewtonPolytope;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SosError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SosOptions {
    /// Restrict the Gram basis to the half Newton polytope.
    pub prune: bool,
    pub sdp: SdpOptions,
    /// Largest accepted `l1_norm(f − Σ q_i²)`.
    pub residual_tol: f64,
    /// Eigenpairs below `eig_cutoff · λ_max` are dropped when extracting factors.
    pub eig_cutoff: f64,
}

impl Default for SosOptions {
    fn default() -> Self {
        SosOptions {
            prune: true,
            sdp: SdpOptions::default(),
            residual_tol: 1e-6,
            eig_cutoff: 1e-9,
        }
    }
}

/// Ordered, duplicate-free monomial basis for a Gram matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GramBasis {
    pub monomials: Vec<Monomial>,
}

impl GramBasis {
    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    /// `Σ_j v_j · m_j`.
    pub fn combine(&self, nvars: usize, v: impl IntoIterator<Item = f64>) -> Polynomial {
        let mut p = Polynomial::zero(nvars);
        for (m, c) in self.monomials.iter().zip(v) {
            p.add_term(m.clone(), c);
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisError {
    /// Odd-degree polynomials are never sums of squares.
    OddDegree(u32),
}

/// Monomials of degree `≤ deg f / 2`, optionally restricted to the half
/// Newton polytope of `f`. The zero polynomial gets an empty basis.
pub fn build_basis(f: &Polynomial, prune: bool) -> Result<GramBasis, BasisError> {
    let Some(deg) = f.degree() else {
        return Ok(GramBasis::default());
    };
    if deg % 2 == 1 {
        return Err(BasisError::OddDegree(deg));
    }
    let candidates = monomials_up_to(f.nvars(), deg / 2);
    Ok(restrict_basis(f, candidates, prune))
}

fn restrict_basis(f: &Polynomial, candidates: Vec<Monomial>, prune: bool) -> GramBasis {
    if !prune {
        return GramBasis {
            monomials: candidates,
        };
    }
    let polytope = NewtonPolytope::new(f.nvars(), f.support());
    GramBasis {
        monomials: candidates
            .into_iter()
            .filter(|m| polytope.contains_doubled(m))
            .collect(),
    }
}

/// `σ = Σ q_i²` realized by a PSD Gram matrix on `basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct SosDecomposition {
    pub basis: GramBasis,
    pub gram: DMatrix<f64>,
    pub factors: Vec<Polynomial>,
    /// `l1_norm(σ − Σ q_i²)` for the polynomial the decomposition was built for.
    pub residual: f64,
}

impl SosDecomposition {
    /// The trivial decomposition of the zero polynomial.
    pub fn zero() -> Self {
        SosDecomposition {
            basis: GramBasis::default(),
            gram: DMatrix::zeros(0, 0),
            factors: Vec::new(),
            residual: 0.0,
        }
    }

    /// Adds the constant square `(√c)²`, extending the basis with `1` if needed.
    pub fn with_constant(&self, nvars: usize, c: f64) -> Self {
        assert!(c >= 0.0, "constant square needs c >= 0");
        let mut out = self.clone();
        if c == 0.0 {
            return out;
        }
        let n = self.basis.len();
        match self.basis.monomials.iter().position(|m| m.is_one()) {
            Some(i) => out.gram[(i, i)] += c,
            None => {
                let mut gram = DMatrix::zeros(n + 1, n + 1);
                gram[(0, 0)] = c;
                gram.view_mut((1, 1), (n, n)).copy_from(&self.gram);
                out.gram = gram;
                out.basis.monomials.insert(0, Monomial::one());
            }
        }
        out.factors.push(Polynomial::constant(nvars, c.sqrt()));
        out
    }

    /// `Σ q_i²` expanded.
    pub fn expand(&self, nvars: usize) -> Polynomial {
        self.factors
            .iter()
            .fold(Polynomial::zero(nvars), |acc, q| acc + q.square())
    }
}

/// Why a polynomial was found not to be a sum of squares.
#[derive(Debug, Clone, PartialEq)]
pub enum NotSos {
    OddDegree(u32),
    /// A linear functional `L` on monomials (the dual of the Gram SDP) with
    /// `L(f) = 1` and `Σ_α L_α A_α ⪯ 0`, so no PSD Gram matrix exists.
    Dual {
        basis: GramBasis,
        functional: BTreeMap<Monomial, f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SosVerdict {
    Sos(SosDecomposition),
    NotSos(NotSos),
    Inconclusive(String),
}

impl SosVerdict {
    pub fn is_sos(&self) -> bool {
        matches!(self, SosVerdict::Sos(_))
    }
}

/// Gram feasibility problem: one constraint per monomial of `basisᵀbasis ∪ supp f`.
struct GramProblem {
    sdp: SdpProblem,
    monomials: Vec<Monomial>,
}

fn gram_problem(f: &Polynomial, basis: &GramBasis) -> GramProblem {
    let n = basis.len();
    let mut entries: BTreeMap<Monomial, Vec<(usize, usize)>> = BTreeMap::new();
    for i in 0..n {
        for j in i..n {
            entries
                .entry(basis.monomials[i].mul(&basis.monomials[j]))
                .or_default()
                .push((i, j));
        }
    }
    for m in f.support() {
        entries.entry(m.clone()).or_default();
    }
    let mut constraints = Vec::with_capacity(entries.len());
    let mut monomials = Vec::with_capacity(entries.len());
    for (m, pairs) in entries {
        let mut a = DMatrix::zeros(n, n);
        for (i, j) in pairs {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        constraints.push((a, f.coeff(&m)));
        monomials.push(m);
    }
    GramProblem {
        sdp: SdpProblem::feasibility(n.max(1), constraints),
        monomials,
    }
}

/// Factors `q_i = √λ_i (v_i · basis)` from the eigenpairs of `gram`.
fn extract_factors(
    nvars: usize,
    basis: &GramBasis,
    gram: &DMatrix<f64>,
    cutoff: f64,
) -> Vec<Polynomial> {
    let eig = SymmetricEigen::new(gram.clone());
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut factors = Vec::new();
    for k in order {
        let l = eig.eigenvalues[k];
        if !(l > 0.0) || l < cutoff * lmax {
            continue;
        }
        let s = l.sqrt();
        let v = eig.eigenvectors.column(k);
        let mut q = basis.combine(nvars, v.iter().map(|c| c * s));
        // sign convention: leading coefficient positive
        let lead = q.terms().next_back().map(|(_, c)| c);
        if lead.is_some_and(|c| c < 0.0) {
            q = -q;
        }
        if !q.is_zero() {
            factors.push(q);
        }
    }
    factors
}

/// Factors from `gram` with the eigenvalue cutoff, retried without it,
/// keeping whichever reconstructs `f` more closely.
fn best_factors(
    f: &Polynomial,
    basis: &GramBasis,
    gram: &DMatrix<f64>,
    opts: &SosOptions,
) -> (Vec<Polynomial>, f64) {
    let nv = f.nvars();
    let mut best: Option<(Vec<Polynomial>, f64)> = None;
    for cutoff in [opts.eig_cutoff, 0.0] {
        let factors = extract_factors(nv, basis, gram, cutoff);
        let sum = factors
            .iter()
            .fold(Polynomial::zero(nv), |acc, q| acc + q.square());
        let residual = (f - &sum).l1_norm();
        if best.as_ref().is_none_or(|(_, r)| residual < *r) {
            best = Some((factors, residual));
        }
        if residual <= opts.residual_tol {
            break;
        }
    }
    best.expect("at least one extraction ran")
}

fn decompose(f: &Polynomial, basis: GramBasis, opts: &SosOptions) -> Result<SosVerdict, SosError> {
    if f.is_zero() {
        let n = basis.len();
        return Ok(SosVerdict::Sos(SosDecomposition {
            basis,
            gram: DMatrix::zeros(n, n),
            ..SosDecomposition::zero()
        }));
    }
    if basis.is_empty() {
        // nonzero polynomial with no admissible Gram monomials
        let functional = f
            .terms()
            .next_back()
            .map(|(m, c)| BTreeMap::from([(m.clone(), 1.0 / c)]))
            .unwrap_or_default();
        return Ok(SosVerdict::NotSos(NotSos::Dual { basis, functional }));
    }
    let problem = gram_problem(f, &basis);
    let outcome = semidefinite::solve(&problem.sdp, &opts.sdp)?;
    match outcome.status {
        SdpStatus::Feasible => {
            let gram = outcome.primal.expect("feasible outcome carries a primal");
            let (factors, residual) = best_factors(f, &basis, &gram, opts);
            if residual > opts.residual_tol {
                return Ok(SosVerdict::Inconclusive(format!(
                    "factor reconstruction residual {residual:.3e} exceeds {:.1e}",
                    opts.residual_tol
                )));
            }
            Ok(SosVerdict::Sos(SosDecomposition {
                basis,
                gram,
                factors,
                residual,
            }))
        }
        SdpStatus::Infeasible => {
            let cert = outcome.dual.expect("infeasible outcome carries a certificate");
            let functional = problem
                .monomials
                .into_iter()
                .zip(cert.y.iter().copied())
                .filter(|(_, v)| *v != 0.0)
                .collect();
            Ok(SosVerdict::NotSos(NotSos::Dual { basis, functional }))
        }
        SdpStatus::Inconclusive => {
            // boundary Gram matrices: the clipped iterate may still reconstruct f
            if let Some(gram) = outcome.primal {
                let (factors, residual) = best_factors(f, &basis, &gram, opts);
                if residual <= opts.residual_tol {
                    return Ok(SosVerdict::Sos(SosDecomposition {
                        basis,
                        gram,
                        factors,
                        residual,
                    }));
                }
            }
            Ok(SosVerdict::Inconclusive(format!(
                "SDP inconclusive after {} iterations (interior margin {:.3e})",
                outcome.iterations, outcome.value
            )))
        }
    }
}

/// Decides whether `f` is a sum of squares.
pub fn is_sos(f: &Polynomial, opts: &SosOptions) -> Result<SosVerdict, SosError> {
    match build_basis(f, opts.prune) {
        Err(BasisError::OddDegree(d)) => Ok(SosVerdict::NotSos(NotSos::OddDegree(d))),
        Ok(basis) => decompose(f, basis, opts),
    }
}

/// Re-checks a dual certificate: `L(f) > 0` and the localizing matrix
/// `Σ_α L_α A_α` on `basis` is negative semidefinite within `tol`.
pub fn check_not_sos(f: &Polynomial, cert: &NotSos, tol: f64) -> bool {
    match cert {
        NotSos::OddDegree(d) => f.degree() == Some(*d) && d % 2 == 1,
        NotSos::Dual { basis, functional } => {
            let lf: f64 = f.terms().map(|(m, c)| c * functional.get(m).unwrap_or(&0.0)).sum();
            let n = basis.len();
            let mut mat = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let m = basis.monomials[i].mul(&basis.monomials[j]);
                    mat[(i, j)] = *functional.get(&m).unwrap_or(&0.0);
                }
            }
            lf > tol && crate::linalg::max_eigenvalue(&mat) <= tol * lf.max(1.0)
        }
    }
}

/// `∇²f ≈ FᵀF`.
#[derive(Debug, Clone, PartialEq)]
pub struct SosConvexityWitness {
    pub factor: MatrixPolynomial,
    /// Largest entry-wise `l1_norm(∇²f − FᵀF)`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SosConvexVerdict {
    SosConvex(SosConvexityWitness),
    NotSosConvex(NotSos),
    Inconclusive(String),
}

impl SosConvexVerdict {
    pub fn is_sos_convex(&self) -> bool {
        matches!(self, SosConvexVerdict::SosConvex(_))
    }
}

/// Decides whether `f` is sos-convex: its Hessian factors as `FᵀF`.
pub fn is_sos_convex(f: &Polynomial, opts: &SosOptions) -> Result<SosConvexVerdict, SosError> {
    is_matrix_sos(&f.hessian(), opts)
}

/// Decides whether a symmetric polynomial matrix `H(X)` equals `F(X)ᵀF(X)`.
///
/// Works on the scalar form `s(X, Y) = Yᵀ H(X) Y` with a Gram basis of
/// monomials that are linear in `Y`.
pub fn is_matrix_sos(h: &MatrixPolynomial, opts: &SosOptions) -> Result<SosConvexVerdict, SosError> {
    let n = h.rows();
    let nx = h.nvars();
    let total = nx + n;
    if h.is_zero() {
        return Ok(SosConvexVerdict::SosConvex(SosConvexityWitness {
            factor: MatrixPolynomial::zeros(1, n, nx),
            residual: 0.0,
        }));
    }
    let mut s = Polynomial::zero(total);
    for i in 0..n {
        for j in 0..n {
            let yij = Polynomial::monomial(
                total,
                Monomial::var(nx + i).mul(&Monomial::var(nx + j)),
                1.0,
            );
            s = s + h.get(i, j).shift_vars(0, total)? * yij;
        }
    }
    let deg = s.degree().unwrap_or(0);
    if deg % 2 == 1 {
        return Ok(SosConvexVerdict::NotSosConvex(NotSos::OddDegree(deg)));
    }
    let xdeg = (deg - 2) / 2;
    let mut candidates = Vec::new();
    for m in monomials_up_to(nx, xdeg) {
        for i in 0..n {
            candidates.push(m.mul(&Monomial::var(nx + i)));
        }
    }
    candidates.sort();
    let basis = restrict_basis(&s, candidates, opts.prune);
    match decompose(&s, basis, opts)? {
        SosVerdict::Sos(dec) => {
            let mut rows = Vec::with_capacity(dec.factors.len().max(1));
            for q in &dec.factors {
                let mut row = vec![Polynomial::zero(nx); n];
                for (m, c) in q.terms() {
                    let ypart = m.restrict(nx..total);
                    let var = ypart.pairs()[0].0;
                    row[var].add_term(m.restrict(0..nx), c);
                }
                rows.push(row);
            }
            let factor = if rows.is_empty() {
                MatrixPolynomial::zeros(1, n, nx)
            } else {
                MatrixPolynomial::from_rows(rows)?
            };
            let residual = h.checked_sub(&factor.gram())?.max_entry_l1();
            if residual > opts.residual_tol {
                return Ok(SosConvexVerdict::Inconclusive(format!(
                    "matrix factor residual {residual:.3e} exceeds {:.1e}",
                    opts.residual_tol
                )));
            }
            Ok(SosConvexVerdict::SosConvex(SosConvexityWitness { factor, residual }))
        }
        SosVerdict::NotSos(c) => Ok(SosConvexVerdict::NotSosConvex(c)),
        SosVerdict::Inconclusive(why) => Ok(SosConvexVerdict::Inconclusive(why)),
    }
}
