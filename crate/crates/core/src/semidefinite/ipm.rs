//! Infeasible-start primal-dual interior-point method for block-diagonal SDPs
//! in standard form:
//!
//! ```text
//! min ⟨C, X⟩  s.t.  ⟨A_k, X⟩ = b_k,  X ⪰ 0
//! max bᵀy     s.t.  Σ y_k A_k + S = C,  S ⪰ 0
//! ```
//!
//! Search directions use Nesterov–Todd scaling with a Mehrotra
//! predictor-corrector step.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};

use crate::linalg::{inner, symmetrize};

/// Block-diagonal SDP in standard form. `a[k][blk]` is block `blk` of the
/// `k`-th constraint matrix.
#[derive(Debug, Clone)]
pub(crate) struct BlockSdp {
    pub sizes: Vec<usize>,
    pub a: Vec<Vec<DMatrix<f64>>>,
    pub b: DVector<f64>,
    pub c: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmResult {
    pub x: Vec<DMatrix<f64>>,
    pub y: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub gap: f64,
}

struct Scaling {
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
}

const STEP_FRACTION: f64 = 0.98;
const DIVERGENCE: f64 = 1e13;

fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<Scaling> {
    let l1 = Cholesky::new(x.clone())?.l();
    let l2 = Cholesky::new(s.clone())?.l();
    let svd = SVD::new(l2.transpose() * &l1, true, true);
    let u = svd.u?;
    let v = svd.v_t?.transpose();
    let lambda = svd.singular_values;
    if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return None;
    }
    let n = x.nrows();
    let inv_sqrt = DMatrix::from_diagonal(&lambda.map(|l| 1.0 / l.sqrt()));
    // R = L1 V Λ^{-1/2},  R^{-1} = Λ^{-1/2} Uᵀ L2ᵀ
    let r = &l1 * &v * &inv_sqrt;
    let r_inv = &inv_sqrt * u.transpose() * l2.transpose();
    let w = symmetrize(&(&r * r.transpose()));
    debug_assert_eq!(w.nrows(), n);
    Some(Scaling {
        r,
        r_inv,
        w,
        lambda,
    })
}

/// Largest `α` with `x + α dx ⪰ 0`, capped at `cap`.
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>, cap: f64) -> f64 {
    let Some(chol) = Cholesky::new(x.clone()) else {
        return 0.0;
    };
    let l = chol.l();
    let Some(linv_dx) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(m) = l.solve_lower_triangular(&linv_dx.transpose()) else {
        return 0.0;
    };
    let lmin = SymmetricEigen::new(symmetrize(&m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if lmin >= 0.0 {
        cap
    } else {
        cap.min(-1.0 / lmin)
    }
}

fn block_inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| inner(x, y)).sum()
}

fn block_norm(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

impl BlockSdp {
    fn apply_a(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(self.a.len(), self.a.iter().map(|ak| block_inner(ak, x)))
    }

    fn apply_at(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (ak, &yk) in self.a.iter().zip(y.iter()) {
            if yk != 0.0 {
                for (o, a) in out.iter_mut().zip(ak) {
                    *o += a * yk;
                }
            }
        }
        out
    }

    fn total_size(&self) -> usize {
        self.sizes.iter().sum()
    }
}

pub(crate) fn solve(p: &BlockSdp, tol: f64, max_iter: usize) -> IpmResult {
    let m = p.a.len();
    let nblk = p.sizes.len();
    let ntot = p.total_size().max(1) as f64;

    let norm_b = p.b.norm();
    let norm_c = block_norm(&p.c);
    let norm_a: Vec<f64> = p.a.iter().map(|ak| block_norm(ak)).collect();

    let mut x: Vec<DMatrix<f64>> = Vec::with_capacity(nblk);
    let mut s: Vec<DMatrix<f64>> = Vec::with_capacity(nblk);
    for &n in &p.sizes {
        let nf = n as f64;
        let mut xi: f64 = 10.0f64.max(nf.sqrt());
        for (b, na) in p.b.iter().zip(&norm_a) {
            xi = xi.max(nf * (1.0 + b.abs()) / (1.0 + na));
        }
        let mut eta: f64 = 10.0f64.max(nf.sqrt()).max(norm_c);
        for &na in &norm_a {
            eta = eta.max(na);
        }
        x.push(DMatrix::identity(n, n) * xi);
        s.push(DMatrix::identity(n, n) * eta);
    }
    let mut y = DVector::zeros(m);

    let mut result = IpmResult {
        x: x.clone(),
        y: y.clone(),
        converged: false,
        iterations: 0,
        primal_infeasibility: f64::INFINITY,
        dual_infeasibility: f64::INFINITY,
        gap: f64::INFINITY,
    };

    let mut best_merit = f64::INFINITY;
    let mut stalled = 0;
    for iter in 0..=max_iter {
        let rp = &p.b - p.apply_a(&x);
        let at_y = p.apply_at(&y);
        let rd: Vec<DMatrix<f64>> = (0..nblk).map(|i| &p.c[i] - &s[i] - &at_y[i]).collect();
        let gap = block_inner(&x, &s);
        let pobj = block_inner(&p.c, &x);
        let dobj = p.b.dot(&y);
        let pinf = rp.norm() / (1.0 + norm_b);
        let dinf = block_norm(&rd) / (1.0 + norm_c);
        let relgap = gap / (1.0 + pobj.abs() + dobj.abs());

        // keep the best iterate: late iterations on degenerate problems can
        // lose accuracy once X becomes numerically singular
        let merit = pinf.max(dinf).max(relgap);
        if merit.is_finite() && !(merit >= best_merit) {
            best_merit = merit;
            result = IpmResult {
                x: x.clone(),
                y: y.clone(),
                converged: false,
                iterations: iter,
                primal_infeasibility: pinf,
                dual_infeasibility: dinf,
                gap: relgap,
            };
        }
        result.iterations = iter;
        if pinf <= tol && dinf <= tol && relgap <= tol {
            result.converged = true;
            return result;
        }
        if iter == max_iter || stalled >= 5 {
            return result;
        }
        let xnorm = block_norm(&x);
        if !xnorm.is_finite() || xnorm > DIVERGENCE || y.amax() > DIVERGENCE {
            return result;
        }

        let mu = gap / ntot;

        let mut scalings = Vec::with_capacity(nblk);
        for i in 0..nblk {
            match nt_scaling(&x[i], &s[i]) {
                Some(sc) => scalings.push(sc),
                None => return result,
            }
        }

        // Schur complement M_ij = Σ_blk ⟨A_i, W A_j W⟩.
        let wa: Vec<Vec<DMatrix<f64>>> = p
            .a
            .iter()
            .map(|ak| {
                ak.iter()
                    .zip(&scalings)
                    .map(|(a, sc)| &sc.w * a * &sc.w)
                    .collect()
            })
            .collect();
        let mut schur = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = block_inner(&p.a[i], &wa[j]);
                schur[(i, j)] = v;
                schur[(j, i)] = v;
            }
        }
        let schur_factor = factor_schur(&schur);
        let Some(schur_factor) = schur_factor else {
            return result;
        };
        let w_rd_w: Vec<DMatrix<f64>> = rd
            .iter()
            .zip(&scalings)
            .map(|(r, sc)| &sc.w * r * &sc.w)
            .collect();

        let direction = |target: &[DMatrix<f64>]| {
            let mut rhs = rp.clone();
            for k in 0..m {
                rhs[k] += block_inner(&p.a[k], &w_rd_w) - block_inner(&p.a[k], target);
            }
            let mut dy = schur_factor.solve(&rhs);
            // one step of iterative refinement
            let resid = &rhs - &schur * &dy;
            dy += schur_factor.solve(&resid);
            let at_dy = p.apply_at(&dy);
            let ds: Vec<DMatrix<f64>> = (0..nblk).map(|i| &rd[i] - &at_dy[i]).collect();
            let dx: Vec<DMatrix<f64>> = (0..nblk)
                .map(|i| symmetrize(&(&target[i] - &scalings[i].w * &ds[i] * &scalings[i].w)))
                .collect();
            (dx, dy, ds)
        };

        // Predictor.
        let target_aff: Vec<DMatrix<f64>> = x.iter().map(|xi| -xi).collect();
        let (dx_a, _dy_a, ds_a) = direction(&target_aff);
        let ap = (0..nblk)
            .map(|i| max_step(&x[i], &dx_a[i], 1.0))
            .fold(1.0, f64::min);
        let ad = (0..nblk)
            .map(|i| max_step(&s[i], &ds_a[i], 1.0))
            .fold(1.0, f64::min);
        let mut gap_aff = 0.0;
        for i in 0..nblk {
            gap_aff += inner(&(&x[i] + &dx_a[i] * ap), &(&s[i] + &ds_a[i] * ad));
        }
        let sigma = if gap > 0.0 {
            (gap_aff / gap).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };

        // Corrector in the scaled space: Λ∘(dx̃ + ds̃) = σμI − Λ² − dx̃ₐ∘ds̃ₐ.
        let target: Vec<DMatrix<f64>> = (0..nblk)
            .map(|i| {
                let sc = &scalings[i];
                let n = p.sizes[i];
                let dxt = &sc.r_inv * &dx_a[i] * sc.r_inv.transpose();
                let dst = sc.r.transpose() * &ds_a[i] * &sc.r;
                let cross = (&dxt * &dst + &dst * &dxt) * 0.5;
                let mut rdot = DMatrix::zeros(n, n);
                for a in 0..n {
                    for b in 0..n {
                        let mut rhs = -cross[(a, b)];
                        if a == b {
                            rhs += sigma * mu - sc.lambda[a] * sc.lambda[a];
                        }
                        rdot[(a, b)] = 2.0 * rhs / (sc.lambda[a] + sc.lambda[b]);
                    }
                }
                &sc.r * rdot * sc.r.transpose()
            })
            .collect();
        let (dx, dy, ds) = direction(&target);

        let ap = (0..nblk)
            .map(|i| max_step(&x[i], &dx[i], f64::INFINITY))
            .fold(f64::INFINITY, f64::min);
        let ad = (0..nblk)
            .map(|i| max_step(&s[i], &ds[i], f64::INFINITY))
            .fold(f64::INFINITY, f64::min);
        let ap = (STEP_FRACTION * ap).min(1.0);
        let ad = (STEP_FRACTION * ad).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            stalled += 1;
        } else {
            stalled = 0;
        }
        for i in 0..nblk {
            x[i] = symmetrize(&(&x[i] + &dx[i] * ap));
            s[i] = symmetrize(&(&s[i] + &ds[i] * ad));
        }
        y += dy * ad;
    }
    result
}

enum SchurFactor {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurFactor {
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            SchurFactor::Chol(c) => c.solve(rhs),
            SchurFactor::Lu(lu) => lu.solve(rhs).unwrap_or_else(|| DVector::zeros(rhs.len())),
        }
    }
}

fn factor_schur(m: &DMatrix<f64>) -> Option<SchurFactor> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(SchurFactor::Chol(c));
    }
    let scale = m.diagonal().amax().max(1e-300);
    let mut reg = m.clone();
    for i in 0..m.nrows() {
        reg[(i, i)] += 1e-13 * scale;
    }
    if let Some(c) = Cholesky::new(reg) {
        return Some(SchurFactor::Chol(c));
    }
    let lu = m.clone().lu();
    if lu.is_invertible() {
        Some(SchurFactor::Lu(lu))
    } else {
        None
    }
}
