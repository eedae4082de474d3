//! Dense semidefinite programming over a single PSD block with affine
//! equality constraints.
//!
//! Pure feasibility problems (zero objective) are solved as
//! `max t  s.t.  ⟨A_k, Q⟩ = b_k,  Q ⪰ t·I,  t ≤ 1`, which returns the most
//! interior Gram matrix available and, when the optimum is negative, a
//! Farkas-type dual certificate `Σ y_k A_k ⪯ 0`, `Σ y_k b_k > 0`.

mod ipm;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use thiserror::Error;

use crate::linalg::{inner, max_eigenvalue, min_eigenvalue, smat, svec, symmetrize};

use ipm::BlockSdp;

const POLISH_ROUNDS: usize = 100;
const LM_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdpError {
    #[error("matrix side length must be at least 1")]
    EmptyDimension,
    #[error("matrix {index} has shape {rows}x{cols}, expected {dim}x{dim}")]
    Shape {
        index: usize,
        rows: usize,
        cols: usize,
        dim: usize,
    },
    #[error("matrix {index} is not symmetric")]
    NotSymmetric { index: usize },
    #[error("non-finite data in problem")]
    NonFinite,
}

/// `⟨A_k, Q⟩ = b_k` for every constraint, `Q ⪰ 0`, minimizing `⟨C, Q⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub dim: usize,
    pub constraints: Vec<(DMatrix<f64>, f64)>,
    pub objective: DMatrix<f64>,
}

impl SdpProblem {
    /// A feasibility problem (zero objective).
    pub fn feasibility(dim: usize, constraints: Vec<(DMatrix<f64>, f64)>) -> Self {
        SdpProblem {
            dim,
            constraints,
            objective: DMatrix::zeros(dim, dim),
        }
    }

    pub fn with_objective(mut self, c: DMatrix<f64>) -> Self {
        self.objective = c;
        self
    }

    pub fn is_feasibility(&self) -> bool {
        self.objective.iter().all(|&v| v == 0.0)
    }

    fn validate(&self) -> Result<(), SdpError> {
        if self.dim == 0 {
            return Err(SdpError::EmptyDimension);
        }
        let mats = std::iter::once(&self.objective).chain(self.constraints.iter().map(|(a, _)| a));
        for (index, a) in mats.enumerate() {
            if a.nrows() != self.dim || a.ncols() != self.dim {
                return Err(SdpError::Shape {
                    index,
                    rows: a.nrows(),
                    cols: a.ncols(),
                    dim: self.dim,
                });
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(SdpError::NonFinite);
            }
            let asym = (a - a.transpose()).amax();
            if asym > 1e-12 * (1.0 + a.amax()) {
                return Err(SdpError::NotSymmetric { index });
            }
        }
        if self.constraints.iter().any(|(_, b)| !b.is_finite()) {
            return Err(SdpError::NonFinite);
        }
        Ok(())
    }

    /// `max_k |⟨A_k, Q⟩ − b_k|`.
    pub fn max_residual(&self, q: &DMatrix<f64>) -> f64 {
        self.constraints
            .iter()
            .map(|(a, b)| (inner(a, q) - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    pub feas_tol: f64,
    pub eig_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            feas_tol: 1e-8,
            eig_tol: 1e-8,
            gap_tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Feasible,
    Infeasible,
    Inconclusive,
}

/// Dual certificate of infeasibility, normalized so that `Σ y_k b_k = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasCertificate {
    pub y: DVector<f64>,
    /// `Σ y_k A_k`, which should be negative semidefinite.
    pub slack: DMatrix<f64>,
}

impl FarkasCertificate {
    /// Re-checks the sign conditions against `problem` with tolerance `tol`.
    pub fn check(&self, problem: &SdpProblem, tol: f64) -> bool {
        if self.y.len() != problem.constraints.len() {
            return false;
        }
        let mut slack = DMatrix::zeros(problem.dim, problem.dim);
        let mut by = 0.0;
        for ((a, b), &yk) in problem.constraints.iter().zip(self.y.iter()) {
            slack += a * yk;
            by += b * yk;
        }
        by > tol && max_eigenvalue(&slack) <= tol * by.max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SdpResiduals {
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub duality_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpOutcome {
    pub status: SdpStatus,
    /// The solution when `Feasible`. For an `Inconclusive` feasibility
    /// problem, the PSD part of the best iterate, which meets neither
    /// tolerance and must be checked by the caller.
    pub primal: Option<DMatrix<f64>>,
    pub dual: Option<FarkasCertificate>,
    pub residuals: SdpResiduals,
    pub iterations: usize,
    /// For feasibility problems, the optimal interior margin `t`
    /// (smallest eigenvalue guaranteed by the solver, capped at the input
    /// scale). For minimization problems, the objective value.
    pub value: f64,
}

impl SdpOutcome {
    fn inconclusive(residuals: SdpResiduals, iterations: usize, value: f64) -> Self {
        SdpOutcome {
            status: SdpStatus::Inconclusive,
            primal: None,
            dual: None,
            residuals,
            iterations,
            value,
        }
    }
}

/// Constraint system reduced to orthonormal rows in `svec` space.
struct Reduced {
    /// `A'_i` as symmetric matrices.
    a: Vec<DMatrix<f64>>,
    b: DVector<f64>,
    /// Maps a reduced dual vector back: `y = map · y'`.
    map: DMatrix<f64>,
}

enum Reduction {
    Consistent(Reduced),
    /// Linear system `A(Q) = b` has no solution; holds the residual direction.
    Inconsistent(DVector<f64>),
}

fn reduce(p: &SdpProblem, b_scaled: &DVector<f64>, tol: f64) -> Reduction {
    let n = p.dim;
    let m = p.constraints.len();
    let nsv = n * (n + 1) / 2;
    let mut amat = DMatrix::zeros(m, nsv);
    for (k, (a, _)) in p.constraints.iter().enumerate() {
        for (j, v) in svec(a).into_iter().enumerate() {
            amat[(k, j)] = v;
        }
    }
    let svd = SVD::new(amat, true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let sv = &svd.singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > 1e-10 * smax && s > 0.0).count();

    let mut ur = DMatrix::zeros(m, rank);
    let mut coords = DVector::zeros(rank);
    let mut map = DMatrix::zeros(m, rank);
    let mut a = Vec::with_capacity(rank);
    let mut kept = 0;
    for i in 0..sv.len() {
        if !(sv[i] > 1e-10 * smax && sv[i] > 0.0) {
            continue;
        }
        let ui = u.column(i);
        ur.set_column(kept, &ui);
        coords[kept] = ui.dot(b_scaled) / sv[i];
        map.set_column(kept, &(ui / sv[i]));
        let row: Vec<f64> = vt.row(i).iter().copied().collect();
        a.push(smat(&row, n));
        kept += 1;
    }
    let proj = &ur * (ur.transpose() * b_scaled);
    let resid = b_scaled - proj;
    if resid.norm() > tol {
        return Reduction::Inconsistent(resid);
    }
    Reduction::Consistent(Reduced { a, b: coords, map })
}

/// Solves `p`. Deterministic for identical inputs and options.
pub fn solve(p: &SdpProblem, opts: &SdpOptions) -> Result<SdpOutcome, SdpError> {
    p.validate()?;
    let n = p.dim;
    let b = DVector::from_iterator(p.constraints.len(), p.constraints.iter().map(|(_, b)| *b));
    let scale = if b.amax() > 0.0 { b.amax() } else { 1.0 };
    let b_scaled = &b / scale;
    let internal_tol = (opts.gap_tol * 1e-2).max(1e-13);

    let reduced = match reduce(p, &b_scaled, 1e-2 * opts.feas_tol / scale) {
        Reduction::Inconsistent(resid) => {
            let by = b.dot(&resid);
            let y = resid / by;
            let mut slack = DMatrix::zeros(n, n);
            for ((a, _), &yk) in p.constraints.iter().zip(y.iter()) {
                slack += a * yk;
            }
            let cert = FarkasCertificate { y, slack };
            let status = if cert.check(p, opts.feas_tol) {
                SdpStatus::Infeasible
            } else {
                SdpStatus::Inconclusive
            };
            return Ok(SdpOutcome {
                status,
                primal: None,
                dual: (status == SdpStatus::Infeasible).then_some(cert),
                residuals: SdpResiduals::default(),
                iterations: 0,
                value: f64::NEG_INFINITY,
            });
        }
        Reduction::Consistent(r) => r,
    };

    if p.is_feasibility() {
        solve_feasibility(p, &reduced, scale, internal_tol, opts)
    } else {
        solve_minimization(p, &reduced, scale, internal_tol, opts)
    }
}

fn solve_feasibility(
    p: &SdpProblem,
    red: &Reduced,
    scale: f64,
    tol: f64,
    opts: &SdpOptions,
) -> Result<SdpOutcome, SdpError> {
    let n = p.dim;
    if red.a.is_empty() {
        // no constraints (or all trivially satisfied by zero right-hand side)
        let q = if p.constraints.is_empty() {
            DMatrix::identity(n, n)
        } else {
            DMatrix::zeros(n, n)
        };
        return Ok(finish_feasible(q, 0, SdpResiduals::default(), 1.0));
    }
    // Q = Z + (1 − u) I with Z ⪰ 0, u ≥ 0; minimize u.
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let blocks = BlockSdp {
        sizes: vec![n, 1],
        a: red
            .a
            .iter()
            .map(|ai| vec![ai.clone(), one(-ai.trace())])
            .collect(),
        b: DVector::from_iterator(
            red.a.len(),
            red.a.iter().zip(red.b.iter()).map(|(ai, bi)| bi - ai.trace()),
        ),
        c: vec![DMatrix::zeros(n, n), one(1.0)],
    };
    let r = ipm::solve(&blocks, tol, opts.max_iter);
    let residuals = SdpResiduals {
        primal_infeasibility: r.primal_infeasibility,
        dual_infeasibility: r.dual_infeasibility,
        duality_gap: r.gap,
    };
    let t = 1.0 - r.x[1][(0, 0)];
    let q = (&r.x[0] + DMatrix::identity(n, n) * t) * scale;
    if let Some(q) = polish(p, red, q.clone(), scale, opts) {
        return Ok(finish_feasible(q, r.iterations, residuals, t * scale));
    }
    if let Some(q) = low_rank_refine(p, red, &q, scale, opts) {
        return Ok(finish_feasible(q, r.iterations, residuals, t * scale));
    }
    // Dual: S_Z = −Σ y'_i A'_i ⪰ 0, so y = map·y' is a Farkas candidate.
    let y = &red.map * &r.y;
    let by: f64 = p.constraints.iter().zip(y.iter()).map(|((_, b), yk)| b * yk).sum();
    if by > 0.0 {
        let y = y / by;
        let mut slack = DMatrix::zeros(n, n);
        for ((a, _), &yk) in p.constraints.iter().zip(y.iter()) {
            slack += a * yk;
        }
        let cert = FarkasCertificate { y, slack };
        if cert.check(p, opts.feas_tol) {
            return Ok(SdpOutcome {
                status: SdpStatus::Infeasible,
                primal: None,
                dual: Some(cert),
                residuals,
                iterations: r.iterations,
                value: t * scale,
            });
        }
    }
    Ok(SdpOutcome {
        primal: Some(clip_psd(&project(red, &q, scale))),
        ..SdpOutcome::inconclusive(residuals, r.iterations, t * scale)
    })
}

/// Orthogonal projection of `q` onto `{Q : A(Q) = b}`; the reduced rows
/// are orthonormal, so this is one correction per row.
fn project(red: &Reduced, q: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let mut qs = q / scale;
    for (ai, bi) in red.a.iter().zip(red.b.iter()) {
        let d = inner(ai, &qs) - bi;
        qs -= ai * d;
    }
    symmetrize(&qs) * scale
}

/// PSD part of a symmetric matrix.
fn clip_psd(q: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(q));
    let vals = eig.eigenvalues.map(|l| l.max(0.0));
    symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()))
}

/// Alternating projections between the affine space and the PSD cone,
/// starting from the interior-point iterate. Boundary optima (margin exactly
/// zero) leave the iterate a few ulps outside one of the two sets.
fn polish(
    p: &SdpProblem,
    red: &Reduced,
    mut q: DMatrix<f64>,
    scale: f64,
    opts: &SdpOptions,
) -> Option<DMatrix<f64>> {
    let ok = |q: &DMatrix<f64>| p.max_residual(q) <= opts.feas_tol && min_eigenvalue(q) >= -opts.eig_tol;
    for _ in 0..POLISH_ROUNDS {
        if ok(&q) {
            return Some(q);
        }
        q = project(red, &q, scale);
        if ok(&q) {
            return Some(q);
        }
        q = clip_psd(&q);
    }
    ok(&q).then_some(q)
}

/// Fits `Q = VVᵀ` to the reduced constraints by Levenberg–Marquardt, for
/// ranks read off the spectrum of `q`. Exact PSD by construction; used when
/// the interior-point iterate sits on a face it cannot resolve.
fn low_rank_refine(
    p: &SdpProblem,
    red: &Reduced,
    q: &DMatrix<f64>,
    scale: f64,
    opts: &SdpOptions,
) -> Option<DMatrix<f64>> {
    let n = p.dim;
    let eig = SymmetricEigen::new(symmetrize(&(q / scale)));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lmax = eig.eigenvalues[order[0]];
    if !(lmax > 0.0) {
        return None;
    }
    let mut ranks: Vec<usize> = [1e-3, 1e-5, 1e-7]
        .iter()
        .map(|tau| order.iter().filter(|&&k| eig.eigenvalues[k] > tau * lmax).count())
        .collect();
    ranks.push(n);
    ranks.dedup();
    for r in ranks {
        let mut v = DMatrix::zeros(n, r);
        for (c, &k) in order.iter().take(r).enumerate() {
            let s = eig.eigenvalues[k].max(0.0).sqrt();
            v.set_column(c, &(eig.eigenvectors.column(k) * s));
        }
        if let Some(v) = levenberg_marquardt(red, v) {
            let q = symmetrize(&(&v * v.transpose())) * scale;
            if p.max_residual(&q) <= opts.feas_tol {
                return Some(q);
            }
        }
    }
    None
}

fn lm_residual(red: &Reduced, v: &DMatrix<f64>) -> DVector<f64> {
    let q = v * v.transpose();
    DVector::from_iterator(
        red.a.len(),
        red.a.iter().zip(red.b.iter()).map(|(a, b)| inner(a, &q) - b),
    )
}

fn levenberg_marquardt(red: &Reduced, mut v: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let m = red.a.len();
    let mut res = lm_residual(red, &v);
    let mut damping = 1e-6;
    for _ in 0..LM_ITERATIONS {
        let norm = res.norm();
        if norm <= 1e-14 {
            break;
        }
        // J_i = 2 A_i V;  (J Jᵀ)_ij = 4 ⟨A_i V, A_j V⟩
        let jv: Vec<DMatrix<f64>> = red.a.iter().map(|a| a * &v * 2.0).collect();
        let mut jjt = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let x = inner(&jv[i], &jv[j]);
                jjt[(i, j)] = x;
                jjt[(j, i)] = x;
            }
        }
        let diag = jjt.diagonal().amax().max(1e-300);
        let mut improved = false;
        for _ in 0..20 {
            let mut sys = jjt.clone();
            for i in 0..m {
                sys[(i, i)] += damping * diag;
            }
            let z = sys.cholesky()?.solve(&res);
            let mut dv = DMatrix::zeros(v.nrows(), v.ncols());
            for (ji, zi) in jv.iter().zip(z.iter()) {
                dv -= ji * *zi;
            }
            let cand = &v + dv;
            let cres = lm_residual(red, &cand);
            if cres.norm() < norm {
                v = cand;
                res = cres;
                damping = (damping * 0.1).max(1e-15);
                improved = true;
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    v.iter().all(|x| x.is_finite()).then_some(v)
}

fn finish_feasible(q: DMatrix<f64>, iterations: usize, residuals: SdpResiduals, value: f64) -> SdpOutcome {
    SdpOutcome {
        status: SdpStatus::Feasible,
        primal: Some(symmetrize(&q)),
        dual: None,
        residuals,
        iterations,
        value,
    }
}

fn solve_minimization(
    p: &SdpProblem,
    red: &Reduced,
    scale: f64,
    tol: f64,
    opts: &SdpOptions,
) -> Result<SdpOutcome, SdpError> {
    let n = p.dim;
    let blocks = BlockSdp {
        sizes: vec![n],
        a: red.a.iter().map(|ai| vec![ai.clone()]).collect(),
        b: red.b.clone(),
        c: vec![p.objective.clone()],
    };
    let r = ipm::solve(&blocks, tol, opts.max_iter);
    let residuals = SdpResiduals {
        primal_infeasibility: r.primal_infeasibility,
        dual_infeasibility: r.dual_infeasibility,
        duality_gap: r.gap,
    };
    let q = &r.x[0] * scale;
    if r.gap <= opts.gap_tol
        && r.dual_infeasibility <= opts.feas_tol
        && p.max_residual(&q) <= opts.feas_tol
        && min_eigenvalue(&q) >= -opts.eig_tol
    {
        let value = inner(&p.objective, &q);
        return Ok(finish_feasible(q, r.iterations, residuals, value));
    }
    // Not solved to optimality: decide whether the constraints are feasible at all.
    let feas = solve_feasibility(&SdpProblem::feasibility(n, p.constraints.clone()), red, scale, tol, opts)?;
    if feas.status == SdpStatus::Infeasible {
        return Ok(SdpOutcome { residuals, ..feas });
    }
    Ok(SdpOutcome::inconclusive(residuals, r.iterations, f64::NAN))
}
