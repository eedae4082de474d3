//! Certificates `f − f* = σ + Σ λ_j g_j` with `λ ≥ 0` and `σ` a convex sum of
//! squares, and an independent verifier that uses polynomial arithmetic only.

use thiserror::Error;

use crate::densify::PerturbationRecord;
use crate::kkt::{self, KktError, KktOptions, KktSolution, SemiAlgebraicSet, Screen};
use crate::polyring::{MatrixPolynomial, PolyError, Polynomial};
use crate::sos::{self, NotSos, SosConvexVerdict, SosDecomposition, SosError, SosOptions, SosVerdict};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertifyError {
    #[error(transparent)]
    Kkt(#[from] KktError),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("Lagrangian invariants violated: L(x*) = {value:.3e}, |grad L(x*)| = {gradient_norm:.3e}")]
    Lagrangian { value: f64, gradient_norm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub kkt: KktOptions,
    pub sos: SosOptions,
    /// Largest accepted identity residual.
    pub cert_tol: f64,
    /// Tolerance for `L(x*) = 0` and `∇L(x*) = 0`.
    pub lagrangian_tol: f64,
    /// Hessian samples for the convexity screen on σ.
    pub samples: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            kkt: KktOptions::default(),
            sos: SosOptions::default(),
            cert_tol: 1e-6,
            lagrangian_tol: 1e-6,
            samples: 200,
        }
    }
}

/// `L = f − f* − Σ λ_j g_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lagrangian {
    pub poly: Polynomial,
    pub fstar: f64,
    pub lambda: Vec<f64>,
    pub xstar: Vec<f64>,
    /// `|L(x*)|`.
    pub value_at_xstar: f64,
    /// `‖∇L(x*)‖₂`.
    pub gradient_norm: f64,
}

/// Builds the Lagrangian at a KKT point.
///
/// `f*` is taken as `f(x*) − Σ λ_j g_j(x*)`, the Lagrangian dual value. It
/// differs from `f(x*)` by the complementarity gap and makes `L(x*) = 0`
/// hold exactly, which keeps `L` nonnegative rather than `−gap`-negative.
pub fn build_lagrangian(
    f: &Polynomial,
    set: &SemiAlgebraicSet,
    sol: &KktSolution,
    tol: f64,
) -> Result<Lagrangian, CertifyError> {
    let n = set.nvars();
    let f = f.with_nvars(n)?;
    let x = &sol.xstar;
    let gap: f64 = set
        .constraints()
        .iter()
        .zip(&sol.lambda)
        .map(|(g, l)| l * g.evaluate(x).unwrap_or(f64::NAN))
        .sum();
    let fstar = f.evaluate(x)? - gap;
    let mut poly = &f - &Polynomial::constant(n, fstar);
    for (g, &l) in set.constraints().iter().zip(&sol.lambda) {
        if l != 0.0 {
            poly = poly - g.scale(l);
        }
    }
    let poly = poly.prune(1e-13 * poly.max_abs_coeff().max(1.0));
    let value_at_xstar = poly.evaluate(x)?.abs();
    let gradient_norm = poly
        .gradient()
        .iter()
        .map(|d| d.evaluate(x).map(|v| v * v))
        .sum::<Result<f64, _>>()?
        .sqrt();
    if !(value_at_xstar <= tol) || !(gradient_norm <= tol) {
        return Err(CertifyError::Lagrangian {
            value: value_at_xstar,
            gradient_norm,
        });
    }
    Ok(Lagrangian {
        poly,
        fstar,
        lambda: sol.lambda.clone(),
        xstar: x.clone(),
        value_at_xstar,
        gradient_norm,
    })
}

/// `f_target − f* = σ + Σ λ_j g_j`, where `f_target` is `f` or its
/// perturbation described by `perturbation`.
#[derive(Debug, Clone, PartialEq)]
pub struct QcCertificate {
    pub nvars: usize,
    pub sigma: SosDecomposition,
    pub lambda: Vec<f64>,
    pub fstar: f64,
    /// Whether the certificate also claims `f ≥ 0` on `K` (requires `f* ≥ 0`).
    pub claims_nonnegative: bool,
    pub xstar: Vec<f64>,
    pub perturbation: Option<PerturbationRecord>,
    /// `l1_norm(f_target − f* − Σ q_i² − Σ λ_j g_j)`.
    pub identity_residual: f64,
    /// `H` with `∇²L = HᵀH`, when the sos-convex path was taken.
    pub hessian_factor: Option<MatrixPolynomial>,
}

impl QcCertificate {
    /// `f` plus the recorded perturbation, if any.
    pub fn target(&self, f: &Polynomial) -> Result<Polynomial, PolyError> {
        let f = f.with_nvars(self.nvars)?;
        Ok(match &self.perturbation {
            Some(p) => f + p.perturbation(self.nvars),
            None => f,
        })
    }

    /// `f_target − f* − Σ q_i² − Σ λ_j g_j`; missing or surplus multipliers
    /// are treated as zero and flagged separately by [`verify`].
    pub fn identity_defect(
        &self,
        f: &Polynomial,
        set: &SemiAlgebraicSet,
    ) -> Result<Polynomial, PolyError> {
        let n = self.nvars;
        let mut r = self.target(f)? - Polynomial::constant(n, self.fstar);
        for q in &self.sigma.factors {
            r = r - q.with_nvars(n)?.square();
        }
        for (g, &l) in set.constraints().iter().zip(&self.lambda) {
            r = r - g.with_nvars(n)?.scale(l);
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CertifyOutcome {
    Certified(QcCertificate),
    /// `L` is not a sum of squares; a perturbation is needed.
    NeedsPerturbation {
        lagrangian: Lagrangian,
        reason: NotSos,
    },
    Inconclusive(String),
}

fn finish(
    f: &Polynomial,
    set: &SemiAlgebraicSet,
    lag: &Lagrangian,
    sigma: SosDecomposition,
    opts: &CertifyOptions,
) -> Result<CertifyOutcome, CertifyError> {
    let mut cert = QcCertificate {
        nvars: set.nvars(),
        sigma,
        lambda: lag.lambda.clone(),
        fstar: lag.fstar,
        claims_nonnegative: lag.fstar >= 0.0,
        xstar: lag.xstar.clone(),
        perturbation: None,
        identity_residual: 0.0,
        hessian_factor: None,
    };
    cert.identity_residual = cert.identity_defect(f, set)?.l1_norm();
    if !(cert.identity_residual <= opts.cert_tol) {
        return Ok(CertifyOutcome::Inconclusive(format!(
            "identity residual {:.3e} exceeds {:.1e}",
            cert.identity_residual, opts.cert_tol
        )));
    }
    let sigma = cert.sigma.expand(cert.nvars);
    if let Screen::Failed { point, eigenvalue } =
        kkt::check_convexity(&sigma, opts.samples, opts.kkt.seed)
    {
        return Ok(CertifyOutcome::Inconclusive(format!(
            "sigma fails the convexity screen at {point:?} (eigenvalue {eigenvalue:.3e})"
        )));
    }
    Ok(CertifyOutcome::Certified(cert))
}

/// Decides whether `L` is a sum of squares and assembles the certificate.
pub fn certify_lagrangian(
    f: &Polynomial,
    set: &SemiAlgebraicSet,
    lag: Lagrangian,
    opts: &CertifyOptions,
) -> Result<CertifyOutcome, CertifyError> {
    match sos::is_sos(&lag.poly, &opts.sos)? {
        SosVerdict::Sos(dec) => finish(f, set, &lag, dec, opts),
        SosVerdict::NotSos(reason) => Ok(CertifyOutcome::NeedsPerturbation {
            lagrangian: lag,
            reason,
        }),
        SosVerdict::Inconclusive(why) => Ok(CertifyOutcome::Inconclusive(why)),
    }
}

/// Minimizes `f` over `K`, builds `L` and tests it for sos-ness.
pub fn certify(
    f: &Polynomial,
    set: &SemiAlgebraicSet,
    opts: &CertifyOptions,
) -> Result<CertifyOutcome, CertifyError> {
    let sol = kkt::minimize(f, set, &opts.kkt)?;
    let lag = build_lagrangian(f, set, &sol, opts.lagrangian_tol)?;
    certify_lagrangian(f, set, lag, opts)
}

/// Which input failed the sos-convexity gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Objective,
    /// Zero-based constraint index whose negation is not sos-convex.
    Constraint(usize),
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum SosConvexPath {
    Applied(CertifyOutcome),
    NotApplicable(Gate),
}

fn sos_convex_factor(
    p: &Polynomial,
    gate: Gate,
    opts: &SosOptions,
) -> Result<Result<MatrixPolynomial, SosConvexPath>, CertifyError> {
    Ok(match sos::is_sos_convex(p, opts)? {
        SosConvexVerdict::SosConvex(w) => Ok(w.factor),
        SosConvexVerdict::NotSosConvex(_) => Err(SosConvexPath::NotApplicable(gate)),
        SosConvexVerdict::Inconclusive(why) => {
            Err(SosConvexPath::Applied(CertifyOutcome::Inconclusive(why)))
        }
    })
}

/// Certification when `f` and every `−g_j` are sos-convex. The Hessian of
/// `L` then factors as `HᵀH` with `H` stacking `F` and `√λ_j G_j`; `H` is
/// recorded on the certificate.
pub fn certify_sos_convex_path(
    f: &Polynomial,
    set: &SemiAlgebraicSet,
    opts: &CertifyOptions,
) -> Result<SosConvexPath, CertifyError> {
    let f = f.with_nvars(set.nvars())?;
    let ff = match sos_convex_factor(&f, Gate::Objective, &opts.sos)? {
        Ok(m) => m,
        Err(path) => return Ok(path),
    };
    let mut gfactors = Vec::with_capacity(set.len());
    for (j, g) in set.constraints().iter().enumerate() {
        match sos_convex_factor(&-g, Gate::Constraint(j), &opts.sos)? {
            Ok(m) => gfactors.push(m),
            Err(path) => return Ok(path),
        }
    }
    let sol = kkt::minimize(&f, set, &opts.kkt)?;
    let lag = build_lagrangian(&f, set, &sol, opts.lagrangian_tol)?;
    let mut blocks = vec![ff];
    for (gj, &l) in gfactors.iter().zip(&sol.lambda) {
        blocks.push(gj.scale(l.sqrt()));
    }
    let h = MatrixPolynomial::vstack(&blocks)?;
    let outcome = match certify_lagrangian(&f, set, lag, opts)? {
        CertifyOutcome::Certified(mut cert) => {
            cert.hessian_factor = Some(h);
            CertifyOutcome::Certified(cert)
        }
        other => other,
    };
    Ok(SosConvexPath::Applied(outcome))
}

/// Names of the individual verifier checks.
pub mod checks {
    pub const FACTORS_FINITE: &str = "factors_finite";
    pub const LAMBDA_LENGTH: &str = "lambda_length";
    pub const LAMBDA_NONNEGATIVE: &str = "lambda_nonnegative";
    pub const IDENTITY: &str = "identity";
    pub const FSTAR_NONNEGATIVE: &str = "fstar_nonnegative";
    pub const SIGMA_CONVEX: &str = "sigma_convexity";
    pub const HESSIAN_FACTOR: &str = "hessian_factor";
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// The quantity compared against the threshold.
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &'static str, passed: bool, value: f64, detail: String) {
        self.checks.push(Check {
            name,
            passed,
            value,
            detail,
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub cert_tol: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            cert_tol: 1e-6,
            samples: 200,
            seed: 0,
        }
    }
}

/// Re-checks a certificate against `(f, K)` without solving anything.
pub fn verify(
    cert: &QcCertificate,
    f: &Polynomial,
    set: &SemiAlgebraicSet,
    opts: &VerifyOptions,
) -> VerificationReport {
    use checks::*;
    let mut report = VerificationReport::default();
    let n = cert.nvars;

    let finite = cert.sigma.factors.iter().all(|q| q.is_finite() && q.nvars() == n)
        && cert.lambda.iter().all(|l| l.is_finite())
        && cert.fstar.is_finite()
        && f.nvars() == n
        && set.nvars() == n;
    report.push(
        FACTORS_FINITE,
        finite,
        cert.sigma.factors.len() as f64,
        format!("{} factors in {n} variables", cert.sigma.factors.len()),
    );

    report.push(
        LAMBDA_LENGTH,
        cert.lambda.len() == set.len(),
        cert.lambda.len() as f64,
        format!("{} multipliers for {} constraints", cert.lambda.len(), set.len()),
    );

    let lmin = cert.lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let lmin_value = if cert.lambda.is_empty() { 0.0 } else { lmin };
    report.push(
        LAMBDA_NONNEGATIVE,
        cert.lambda.iter().all(|&l| l >= 0.0),
        lmin_value,
        format!("min lambda = {lmin_value:e}"),
    );

    let residual = if finite {
        cert.identity_defect(f, set)
            .map(|p| p.l1_norm())
            .unwrap_or(f64::INFINITY)
    } else {
        f64::INFINITY
    };
    report.push(
        IDENTITY,
        residual <= opts.cert_tol,
        residual,
        format!("l1 residual {residual:e} (tolerance {:e})", opts.cert_tol),
    );

    if cert.claims_nonnegative {
        report.push(
            FSTAR_NONNEGATIVE,
            cert.fstar >= 0.0,
            cert.fstar,
            format!("f* = {}", cert.fstar),
        );
    }

    let (convex, eig, where_) = if finite {
        match kkt::check_convexity(&cert.sigma.expand(n), opts.samples, opts.seed) {
            Screen::Passed => (true, 0.0, "all samples".to_string()),
            Screen::Failed { point, eigenvalue } => (false, eigenvalue, format!("{point:?}")),
        }
    } else {
        (false, f64::NAN, "non-finite factors".to_string())
    };
    report.push(
        SIGMA_CONVEX,
        convex,
        eig,
        format!("Hessian PSD screen over {} samples: {where_}", opts.samples),
    );

    if let Some(h) = &cert.hessian_factor {
        let defect = cert.target(f).ok().and_then(|t| {
            let mut lag = t;
            for (g, &l) in set.constraints().iter().zip(&cert.lambda) {
                lag = lag - g.scale(l);
            }
            lag.hessian().checked_sub(&h.gram()).ok().map(|d| d.max_entry_l1())
        });
        let defect = defect.unwrap_or(f64::INFINITY);
        report.push(
            HESSIAN_FACTOR,
            defect <= opts.cert_tol,
            defect,
            format!("max entry l1 of grad^2 L - H^T H = {defect:e}"),
        );
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str, n: usize) -> Polynomial {
        Polynomial::parse(s, n).unwrap()
    }

    fn set(n: usize, gs: &[&str]) -> SemiAlgebraicSet {
        SemiAlgebraicSet::new(n, gs.iter().map(|g| p(g, n)).collect()).unwrap()
    }

    fn certified(f: &Polynomial, k: &SemiAlgebraicSet) -> QcCertificate {
        match certify(f, k, &CertifyOptions::default()).unwrap() {
            CertifyOutcome::Certified(c) => c,
            other => panic!("not certified: {other:?}"),
        }
    }

    #[test]
    fn lagrangian_of_shifted_square() {
        let f = p("(x1 - 2)^2", 1);
        let k = set(1, &["1 - x1"]);
        let sol = kkt::minimize(&f, &k, &KktOptions::default()).unwrap();
        let lag = build_lagrangian(&f, &k, &sol, 1e-6).unwrap();
        assert!((&lag.poly - &p("(x1 - 1)^2", 1)).max_abs_coeff() < 1e-6);
    }

    #[test]
    fn interior_minimizer_lagrangian_is_shifted_objective() {
        let f = p("(x1 - 0.5)^2 + 3", 1);
        let k = set(1, &["1 - x1^2"]);
        let sol = kkt::minimize(&f, &k, &KktOptions::default()).unwrap();
        let lag = build_lagrangian(&f, &k, &sol, 1e-6).unwrap();
        assert_eq!(lag.lambda, vec![0.0]);
        assert!((&lag.poly - &p("(x1 - 0.5)^2", 1)).max_abs_coeff() < 1e-6);
    }

    #[test]
    fn objective_equal_to_constraint() {
        let f = p("x1", 1);
        let k = set(1, &["x1"]);
        let sol = kkt::minimize(&f, &k, &KktOptions::default()).unwrap();
        let lag = build_lagrangian(&f, &k, &sol, 1e-6).unwrap();
        assert!(lag.poly.max_abs_coeff() < 1e-6);
    }

    #[test]
    fn certificate_examples() {
        let c = certified(&p("(x1 - 2)^2", 1), &set(1, &["1 - x1"]));
        assert!((c.fstar - 1.0).abs() < 1e-6);
        assert!((c.lambda[0] - 2.0).abs() < 1e-6);
        assert!((c.sigma.expand(1) - p("(x1 - 1)^2", 1)).max_abs_coeff() < 1e-6);
        assert!(c.identity_residual <= 1e-8);

        let c = certified(&p("x1^2 + x2^2", 2), &set(2, &["x1 + x2 - 2"]));
        assert!((c.fstar - 2.0).abs() < 1e-6);
        assert!((c.lambda[0] - 2.0).abs() < 1e-6);
        let sigma = c.sigma.expand(2);
        assert!((sigma - p("(x1 - 1)^2 + (x2 - 1)^2", 2)).max_abs_coeff() < 1e-6);

        let c = certified(&p("7", 1), &set(1, &["1 - x1^2"]));
        assert_eq!(c.lambda, vec![0.0]);
        assert!((c.fstar - 7.0).abs() < 1e-12);
        assert!(c.sigma.expand(1).max_abs_coeff() < 1e-9);
    }

    #[test]
    fn verify_accepts_and_rejects() {
        let f = p("(x1 - 2)^2", 1);
        let k = set(1, &["1 - x1"]);
        let c = certified(&f, &k);
        let opts = VerifyOptions::default();
        let report = verify(&c, &f, &k, &opts);
        assert!(report.passed(), "{report:?}");
        assert!(report.get(checks::IDENTITY).unwrap().value <= 1e-8);

        let mut bad = c.clone();
        bad.lambda[0] = -2.0;
        let r = verify(&bad, &f, &k, &opts);
        assert!(!r.get(checks::LAMBDA_NONNEGATIVE).unwrap().passed);

        let mut bad = c.clone();
        bad.fstar += 0.5;
        let r = verify(&bad, &f, &k, &opts);
        assert!(!r.get(checks::IDENTITY).unwrap().passed);
        assert!(r.get(checks::LAMBDA_NONNEGATIVE).unwrap().passed);
    }

    #[test]
    fn sos_convex_path_examples() {
        let f = p("(x1 - 2)^2", 1);
        let k = set(1, &["1 - x1"]);
        let SosConvexPath::Applied(CertifyOutcome::Certified(c)) =
            certify_sos_convex_path(&f, &k, &CertifyOptions::default()).unwrap()
        else {
            panic!()
        };
        let h = c.hessian_factor.as_ref().unwrap();
        assert_eq!(h.cols(), 1);
        assert!((h.get(0, 0).coeff(&crate::polyring::Monomial::one()).abs() - 2f64.sqrt()).abs() < 1e-6);
        assert!(h.get(1, 0).max_abs_coeff() == 0.0);
        assert!(verify(&c, &f, &k, &VerifyOptions::default()).passed());

        let path = certify_sos_convex_path(&p("x1^4", 1), &set(1, &["1 - x1^2"]), &CertifyOptions::default())
            .unwrap();
        assert!(matches!(path, SosConvexPath::Applied(CertifyOutcome::Certified(_))), "{path:?}");

        // −g is the Motzkin form minus one, which is not even convex.
        let k = set(2, &["3*x1^2*x2^2 - x1^4*x2^2 - x1^2*x2^4"]);
        let path = certify_sos_convex_path(&p("x1^2", 2), &k, &CertifyOptions::default()).unwrap();
        assert_eq!(path, SosConvexPath::NotApplicable(Gate::Constraint(0)));
    }
}
