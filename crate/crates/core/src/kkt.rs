//! Convex minimization over `K = {x : g_j(x) ≥ 0}` by log-barrier path
//! following, returning the minimizer and its KKT multipliers.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::min_eigenvalue;
use crate::polyring::{MatrixPolynomial, PolyError, Polynomial};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KktError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("objective is not convex: Hessian eigenvalue {eigenvalue:.3e} at {point:?}")]
    NotConvex { point: Vec<f64>, eigenvalue: f64 },
    #[error("constraint g{} is not concave: eigenvalue {eigenvalue:.3e} at {point:?}", .index + 1)]
    NotConcave {
        index: usize,
        point: Vec<f64>,
        eigenvalue: f64,
    },
    #[error("slater point violates g{} (value {value:.3e})", .index + 1)]
    InvalidSlaterPoint { index: usize, value: f64 },
    #[error("no strictly feasible point found")]
    NoInteriorFound,
    #[error("objective unbounded below on the feasible set (|x| = {norm:.3e}, f = {value:.3e})")]
    Unbounded { norm: f64, value: f64 },
    #[error("Newton iteration stalled: stationarity {stationarity:.3e}, complementarity {complementarity:.3e}")]
    NewtonFailure {
        stationarity: f64,
        complementarity: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktOptions {
    pub kkt_tol: f64,
    pub mu_start: f64,
    pub mu_end: f64,
    pub mu_factor: f64,
    /// Armijo sufficient-decrease constant.
    pub alpha: f64,
    /// Backtracking factor.
    pub beta: f64,
    pub divergence_radius: f64,
    pub starts: usize,
    pub max_newton: usize,
    /// Hessian samples for the convexity screens.
    pub samples: usize,
    pub sample_scale: f64,
    pub seed: u64,
    /// Skip the sampling screens (caller has already checked).
    pub screen: bool,
}

impl Default for KktOptions {
    fn default() -> Self {
        KktOptions {
            kkt_tol: 1e-6,
            mu_start: 1.0,
            mu_end: 1e-10,
            mu_factor: 0.2,
            alpha: 0.25,
            beta: 0.5,
            divergence_radius: 1e6,
            starts: 8,
            max_newton: 200,
            samples: 200,
            sample_scale: 2.0,
            seed: 0,
            screen: true,
        }
    }
}

/// Result of a Hessian sampling screen.
#[derive(Debug, Clone, PartialEq)]
pub enum Screen {
    Passed,
    Failed { point: Vec<f64>, eigenvalue: f64 },
}

impl Screen {
    pub fn passed(&self) -> bool {
        matches!(self, Screen::Passed)
    }
}

const PSD_TOL: f64 = 1e-8;

/// Sample points: the origin, `±e_i`, then Gaussian points of the given scale.
pub fn sample_points(nvars: usize, samples: usize, scale: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut pts = Vec::with_capacity(samples.max(1 + 2 * nvars));
    pts.push(vec![0.0; nvars]);
    for i in 0..nvars {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; nvars];
            e[i] = s;
            pts.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while pts.len() < samples {
        pts.push(
            (0..nvars)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    scale * v
                })
                .collect::<Vec<f64>>(),
        );
    }
    pts
}

fn screen_psd(h: &MatrixPolynomial, points: &[Vec<f64>]) -> Screen {
    if h.is_zero() {
        return Screen::Passed;
    }
    for x in points {
        let m = h.evaluate(x).expect("sample dimension matches");
        let scale = m.amax().max(1.0);
        let e = min_eigenvalue(&m);
        if e < -PSD_TOL * scale || !e.is_finite() {
            return Screen::Failed {
                point: x.clone(),
                eigenvalue: e,
            };
        }
    }
    Screen::Passed
}

/// Necessary-condition test for convexity: `∇²f ⪰ 0` at sampled points.
pub fn check_convexity(f: &Polynomial, samples: usize, seed: u64) -> Screen {
    let pts = sample_points(f.nvars(), samples, KktOptions::default().sample_scale, seed);
    screen_psd(&f.hessian(), &pts)
}

/// Necessary-condition test for concavity: `−∇²g ⪰ 0` at sampled points.
pub fn check_concavity(g: &Polynomial, samples: usize, seed: u64) -> Screen {
    check_convexity(&-g, samples, seed)
}

/// `K = {x : g_j(x) ≥ 0 for all j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiAlgebraicSet {
    nvars: usize,
    g: Vec<Polynomial>,
    slater_point: Option<Vec<f64>>,
    concavity_checked: Vec<bool>,
}

impl SemiAlgebraicSet {
    pub fn new(nvars: usize, g: Vec<Polynomial>) -> Result<Self, KktError> {
        let g = g
            .into_iter()
            .map(|p| p.with_nvars(nvars))
            .collect::<Result<Vec<_>, _>>()?;
        let m = g.len();
        Ok(SemiAlgebraicSet {
            nvars,
            g,
            slater_point: None,
            concavity_checked: vec![false; m],
        })
    }

    /// The whole space (no constraints).
    pub fn unconstrained(nvars: usize) -> Self {
        SemiAlgebraicSet {
            nvars,
            g: Vec::new(),
            slater_point: None,
            concavity_checked: Vec::new(),
        }
    }

    pub fn with_slater_point(mut self, z: Vec<f64>) -> Result<Self, KktError> {
        if z.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                got: z.len(),
            }
            .into());
        }
        for (index, g) in self.g.iter().enumerate() {
            let value = g.eval_unchecked(&z);
            if !(value > 0.0) {
                return Err(KktError::InvalidSlaterPoint { index, value });
            }
        }
        self.slater_point = Some(z);
        Ok(self)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn constraints(&self) -> &[Polynomial] {
        &self.g
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn slater_point(&self) -> Option<&[f64]> {
        self.slater_point.as_deref()
    }

    pub fn concavity_checked(&self) -> &[bool] {
        &self.concavity_checked
    }

    /// Same set with every `g_j` multiplied by `c_j > 0`.
    pub fn scaled(&self, c: &[f64]) -> Self {
        let mut s = self.clone();
        for (g, &cj) in s.g.iter_mut().zip(c) {
            *g = g.scale(cj);
        }
        s
    }

    /// Runs the concavity screen on every constraint and records the result.
    pub fn screen_concavity(&mut self, samples: usize, seed: u64) -> Result<(), KktError> {
        for (index, g) in self.g.iter().enumerate() {
            if let Screen::Failed { point, eigenvalue } = check_concavity(g, samples, seed) {
                return Err(KktError::NotConcave {
                    index,
                    point,
                    eigenvalue,
                });
            }
            self.concavity_checked[index] = true;
        }
        Ok(())
    }

    /// Whether `x ∈ K` up to `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.g.iter().all(|g| g.eval_unchecked(x) >= -tol)
    }

    fn min_g(&self, x: &[f64]) -> f64 {
        self.g
            .iter()
            .map(|g| g.eval_unchecked(x))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Smoothed `min_j g_j`, maximized by gradient ascent.
fn soft_min(set: &SemiAlgebraicSet, grads: &[Vec<Polynomial>], x: &[f64], t: f64) -> (f64, DVector<f64>) {
    let vals: Vec<f64> = set.g.iter().map(|g| g.eval_unchecked(x)).collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = vals.iter().map(|v| (-t * (v - lo)).exp()).collect();
    let total: f64 = w.iter().sum();
    let value = lo - total.ln() / t;
    let mut grad = DVector::zeros(set.nvars);
    for (j, gj) in grads.iter().enumerate() {
        let wj = w[j] / total;
        for (i, d) in gj.iter().enumerate() {
            grad[i] += wj * d.eval_unchecked(x);
        }
    }
    (value, grad)
}

/// Finds `z` with `g_j(z) > 0` for all `j`.
pub fn find_slater(set: &SemiAlgebraicSet, seed: u64) -> Result<Vec<f64>, KktError> {
    if let Some(z) = &set.slater_point {
        return Ok(z.clone());
    }
    let n = set.nvars;
    if set.is_empty() {
        return Ok(vec![0.0; n]);
    }
    let grads: Vec<Vec<Polynomial>> = set.g.iter().map(|g| g.gradient()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in 0..8 {
        let mut x: Vec<f64> = if start == 0 {
            vec![0.0; n]
        } else {
            (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
        };
        for _ in 0..500 {
            let m = set.min_g(&x);
            if m >= 1.0 {
                break;
            }
            let t = 10.0 / (1.0 + m.abs());
            let (v, d) = soft_min(set, &grads, &x, t);
            let dn2 = d.norm_squared();
            if !(dn2 > 1e-30) {
                break;
            }
            let mut step = 1.0;
            let mut moved = false;
            while step > 1e-12 {
                let y: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + step * b).collect();
                let (vy, _) = soft_min(set, &grads, &y, t);
                if vy >= v + 0.25 * step * dn2 {
                    x = y;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let m = set.min_g(&x);
        if m.is_finite() && best.as_ref().is_none_or(|(bm, _)| m > *bm) {
            best = Some((m, x));
        }
        if best.as_ref().is_some_and(|(bm, _)| *bm >= 1.0) {
            break;
        }
    }
    match best {
        Some((m, z)) if m > 0.0 => Ok(z),
        _ => Err(KktError::NoInteriorFound),
    }
}

/// Minimizer of `f` over `K` with KKT multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub xstar: Vec<f64>,
    pub fstar: f64,
    pub lambda: Vec<f64>,
    /// `‖∇f(x*) − Σ λ_j ∇g_j(x*)‖₂`.
    pub stationarity_residual: f64,
    /// `max_j |λ_j g_j(x*)|`.
    pub complementarity_residual: f64,
    /// `(μ, f(x_μ))` after each barrier stage.
    pub trajectory: Vec<(f64, f64)>,
}

/// Multipliers below this are reported as exactly zero.
const LAMBDA_SNAP: f64 = 1e-9;

struct Barrier<'a> {
    f: &'a Polynomial,
    fgrad: Vec<Polynomial>,
    fhess: MatrixPolynomial,
    g: &'a [Polynomial],
    ggrad: Vec<Vec<Polynomial>>,
    ghess: Vec<MatrixPolynomial>,
}

impl<'a> Barrier<'a> {
    fn new(f: &'a Polynomial, g: &'a [Polynomial]) -> Self {
        Barrier {
            f,
            fgrad: f.gradient(),
            fhess: f.hessian(),
            g,
            ggrad: g.iter().map(|p| p.gradient()).collect(),
            ghess: g.iter().map(|p| p.hessian()).collect(),
        }
    }

    fn eval_vec(ps: &[Polynomial], x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(ps.len(), ps.iter().map(|p| p.eval_unchecked(x)))
    }

    /// `f − μ Σ log g_j`, or `None` outside the interior.
    fn value(&self, x: &[f64], mu: f64) -> Option<f64> {
        let mut v = self.f.eval_unchecked(x);
        for g in self.g {
            let gv = g.eval_unchecked(x);
            if !(gv > 0.0) {
                return None;
            }
            v -= mu * gv.ln();
        }
        v.is_finite().then_some(v)
    }

    fn derivatives(&self, x: &[f64], mu: f64) -> (DVector<f64>, DMatrix<f64>) {
        let mut grad = Self::eval_vec(&self.fgrad, x);
        let mut hess = self.fhess.evaluate(x).expect("dimension checked");
        for j in 0..self.g.len() {
            let gv = self.g[j].eval_unchecked(x);
            let dg = Self::eval_vec(&self.ggrad[j], x);
            let hg = self.ghess[j].evaluate(x).expect("dimension checked");
            grad -= &dg * (mu / gv);
            hess -= hg * (mu / gv);
            hess += &dg * dg.transpose() * (mu / (gv * gv));
        }
        (grad, hess)
    }

    fn stationarity(&self, x: &[f64], lambda: &[f64]) -> f64 {
        let mut r = Self::eval_vec(&self.fgrad, x);
        for (j, l) in lambda.iter().enumerate() {
            r -= Self::eval_vec(&self.ggrad[j], x) * *l;
        }
        r.norm()
    }
}

/// Newton direction for a PSD Hessian, regularizing when it is singular.
fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let n = grad.len();
    let scale = hess.amax().max(1.0);
    let mut delta = 0.0;
    for _ in 0..30 {
        let h = hess + DMatrix::identity(n, n) * delta;
        if let Some(ch) = h.cholesky() {
            let d = -ch.solve(grad);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        delta = if delta == 0.0 { 1e-12 * scale } else { delta * 10.0 };
    }
    None
}

enum Inner {
    Done,
    Diverged,
}

/// Damped Newton on the barrier function at fixed `μ`.
fn centre(b: &Barrier, x: &mut Vec<f64>, mu: f64, opts: &KktOptions) -> Inner {
    let Some(mut phi) = b.value(x, mu) else {
        return Inner::Done;
    };
    for _ in 0..opts.max_newton {
        let (grad, hess) = b.derivatives(x, mu);
        let Some(d) = newton_direction(&hess, &grad) else {
            return Inner::Done;
        };
        let slope = grad.dot(&d);
        if !(slope < 0.0) || -slope <= 1e-24 * (1.0 + phi.abs()) {
            return Inner::Done;
        }
        // Decreases this small are below the resolution of φ; rely on the
        // gradient-norm fallback instead of Armijo.
        let resolvable = -slope > 1e-12 * (1.0 + phi.abs());
        let mut t = 1.0;
        let mut accepted = None;
        while resolvable && t > 1e-8 {
            let y: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + t * b).collect();
            if let Some(py) = b.value(&y, mu) {
                if py <= phi + opts.alpha * t * slope {
                    accepted = Some((y, py));
                    break;
                }
            }
            t *= opts.beta;
        }
        // Accept the largest interior step that still reduces the gradient norm.
        let accepted = accepted.or_else(|| {
            let gnorm = grad.norm();
            let mut t = 1.0;
            while t > 1e-6 {
                let y: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + t * b).collect();
                if let Some(py) = b.value(&y, mu) {
                    if b.derivatives(&y, mu).0.norm() < 0.9 * gnorm {
                        return Some((y, py));
                    }
                }
                t *= opts.beta;
            }
            None
        });
        let Some((y, py)) = accepted else {
            return Inner::Done;
        };
        *x = y;
        phi = py;
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > opts.divergence_radius {
            return Inner::Diverged;
        }
    }
    Inner::Done
}

fn run_path(b: &Barrier, start: Vec<f64>, opts: &KktOptions) -> Result<KktSolution, KktError> {
    let mut x = start;
    let mut trajectory = Vec::new();
    let stages: Vec<f64> = if b.g.is_empty() {
        vec![0.0]
    } else {
        let mut mus = Vec::new();
        let mut mu = opts.mu_start;
        while mu >= opts.mu_end * (1.0 - 1e-9) {
            mus.push(mu);
            mu *= opts.mu_factor;
        }
        mus
    };
    // Cancellation in g_j near the boundary limits attainable accuracy at the
    // smallest μ, so the stage with the best KKT residual is reported.
    let mut best: Option<KktSolution> = None;
    for &mu in &stages {
        if let Inner::Diverged = centre(b, &mut x, mu, opts) {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            return Err(KktError::Unbounded {
                norm,
                value: b.f.eval_unchecked(&x),
            });
        }
        trajectory.push((mu, b.f.eval_unchecked(&x)));
        let cand = kkt_point(b, &x, mu, 0.0);
        let score = |s: &KktSolution| s.stationarity_residual.max(s.complementarity_residual);
        if best.as_ref().is_none_or(|bs| !(score(&cand) > score(bs))) {
            best = Some(cand);
        }
    }
    let best = best.expect("at least one barrier stage");
    let mu = best.trajectory[0].0;
    let mut sol = kkt_point(b, &best.xstar, mu, LAMBDA_SNAP);
    let feasible = b.g.iter().all(|g| g.eval_unchecked(&sol.xstar) >= -opts.kkt_tol);
    if !(sol.stationarity_residual <= opts.kkt_tol)
        || !(sol.complementarity_residual <= opts.kkt_tol)
        || !feasible
    {
        return Err(KktError::NewtonFailure {
            stationarity: sol.stationarity_residual,
            complementarity: sol.complementarity_residual,
        });
    }
    sol.trajectory = trajectory;
    Ok(sol)
}

/// Multipliers `λ_j = μ / g_j(x)` and the KKT residuals at `x`.
fn kkt_point(b: &Barrier, x: &[f64], mu: f64, snap: f64) -> KktSolution {
    let mut lambda: Vec<f64> = b.g.iter().map(|g| mu / g.eval_unchecked(x)).collect();
    for l in lambda.iter_mut() {
        if *l < snap {
            *l = 0.0;
        }
    }
    let stationarity_residual = b.stationarity(x, &lambda);
    let complementarity_residual = b
        .g
        .iter()
        .zip(&lambda)
        .map(|(g, l)| (l * g.eval_unchecked(x)).abs())
        .fold(0.0, f64::max);
    KktSolution {
        xstar: x.to_vec(),
        fstar: b.f.eval_unchecked(x),
        lambda,
        stationarity_residual,
        complementarity_residual,
        trajectory: vec![(mu, b.f.eval_unchecked(x))],
    }
}

/// Strictly feasible starting points: the Slater point and random jitters of it.
fn starting_points(set: &SemiAlgebraicSet, z: &[f64], opts: &KktOptions) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let mut starts = vec![z.to_vec()];
    for _ in 1..opts.starts.max(1) {
        let dir: Vec<f64> = (0..z.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut s = 1.0;
        for _ in 0..30 {
            let y: Vec<f64> = z.iter().zip(&dir).map(|(a, d)| a + s * d).collect();
            if set.g.iter().all(|g| g.eval_unchecked(&y) > 0.0) {
                starts.push(y);
                break;
            }
            s *= 0.5;
        }
    }
    starts
}

fn rounded(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| (v * 1e8).round() / 1e8).collect()
}

/// `min f(x)` subject to `g_j(x) ≥ 0`.
pub fn minimize(
    f: &Polynomial,
    set: &SemiAlgebraicSet,
    opts: &KktOptions,
) -> Result<KktSolution, KktError> {
    let f = f.with_nvars(set.nvars)?;
    if opts.screen {
        let pts = sample_points(set.nvars, opts.samples, opts.sample_scale, opts.seed);
        if let Screen::Failed { point, eigenvalue } = screen_psd(&f.hessian(), &pts) {
            return Err(KktError::NotConvex { point, eigenvalue });
        }
        for (index, g) in set.g.iter().enumerate() {
            if let Screen::Failed { point, eigenvalue } = screen_psd(&(-g).hessian(), &pts) {
                return Err(KktError::NotConcave {
                    index,
                    point,
                    eigenvalue,
                });
            }
        }
    }
    let z = find_slater(set, opts.seed)?;
    let barrier = Barrier::new(&f, &set.g);
    let mut best: Option<KktSolution> = None;
    let mut first_err = None;
    for start in starting_points(set, &z, opts) {
        match run_path(&barrier, start, opts) {
            Ok(sol) => {
                let replace = match &best {
                    None => true,
                    Some(b) => {
                        let tie = 1e-9 * (1.0 + b.fstar.abs());
                        sol.fstar < b.fstar - tie
                            || (sol.fstar <= b.fstar + tie
                                && rounded(&sol.xstar)
                                    .partial_cmp(&rounded(&b.xstar))
                                    .is_some_and(|o| o.is_lt()))
                    }
                };
                if replace {
                    best = Some(sol);
                }
            }
            Err(e @ KktError::Unbounded { .. }) => return Err(e),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or(KktError::NoInteriorFound))
}
