//! Perturbation of a convex objective into one with a certificate.
//!
//! With `r0 = ⌊deg f / 2⌋ + 1`, the objective `f + εΘ_{r0}` has compact level
//! sets, so its minimum over `K` is attained. Its Lagrangian `L` plus `εΘ_r`
//! is a sum of squares for every large enough `r`; the search below finds
//! the smallest such `r ≤ r_max`. The certified polynomial is
//! `f_ε = f + ε(Θ_{r0} + Θ_r)`, at l1 distance `ε‖Θ_{r0} + Θ_r‖₁` from `f`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{
    self, build_lagrangian, CertifyError, CertifyOptions, QcCertificate, VerifyOptions,
};
use crate::kkt::{self, SemiAlgebraicSet};
use crate::polyring::{Monomial, Polynomial};
use crate::sos::{self, SosVerdict};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensifyError {
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("perturbation order must be at least 1, got {0}")]
    InvalidOrder(u32),
    #[error("no r in {r0}..={r_max} gave a sum of squares")]
    Exhausted {
        r0: u32,
        r_max: u32,
        trace: Vec<Trial>,
    },
    #[error(transparent)]
    Certify(#[from] CertifyError),
}

/// `Θ_r = 1 + Σ_i x_i^{2r}`.
pub fn theta(r: u32, nvars: usize) -> Result<Polynomial, DensifyError> {
    if r < 1 {
        return Err(DensifyError::InvalidOrder(r));
    }
    let mut p = Polynomial::constant(nvars, 1.0);
    for i in 0..nvars {
        p.add_term(Monomial::var_pow(i, 2 * r), 1.0);
    }
    Ok(p)
}

/// `θ_r = Σ_{k=0}^{r} Σ_i x_i^{2k} / k!`.
pub fn theta_lower(r: u32, nvars: usize) -> Polynomial {
    let mut p = Polynomial::zero(nvars);
    let mut fact = 1.0;
    for k in 0..=r {
        if k > 0 {
            fact *= k as f64;
        }
        for i in 0..nvars {
            p.add_term(Monomial::var_pow(i, 2 * k), 1.0 / fact);
        }
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaKind {
    #[default]
    Theta,
    ThetaLower,
}

impl ThetaKind {
    pub fn poly(self, r: u32, nvars: usize) -> Result<Polynomial, DensifyError> {
        match self {
            ThetaKind::Theta => theta(r, nvars),
            ThetaKind::ThetaLower => Ok(theta_lower(r, nvars)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub epsilon: f64,
    pub r0: u32,
    pub r: u32,
    pub kind: ThetaKind,
    /// `ε · l1_norm(P_{r0} + P_r)`.
    pub l1_distance: f64,
}

impl PerturbationRecord {
    pub fn new(epsilon: f64, r0: u32, r: u32, kind: ThetaKind, nvars: usize) -> Result<Self, DensifyError> {
        let sum = kind.poly(r0, nvars)? + kind.poly(r, nvars)?;
        Ok(PerturbationRecord {
            epsilon,
            r0,
            r,
            kind,
            l1_distance: epsilon * sum.l1_norm(),
        })
    }

    /// `ε (P_{r0} + P_r)`. An invalid order contributes zero, so a malformed
    /// record fails the identity check instead of panicking.
    pub fn perturbation(&self, nvars: usize) -> Polynomial {
        let part = |r| {
            self.kind
                .poly(r, nvars)
                .unwrap_or_else(|_| Polynomial::zero(nvars))
        };
        (part(self.r0) + part(self.r)).scale(self.epsilon)
    }
}

/// `⌊deg f / 2⌋ + 1`, with `1` for the zero polynomial.
pub fn base_order(f: &Polynomial) -> u32 {
    f.degree().map_or(1, |d| d / 2 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensifyOptions {
    pub r_max: u32,
    pub kind: ThetaKind,
    pub certify: CertifyOptions,
}

impl Default for DensifyOptions {
    fn default() -> Self {
        DensifyOptions {
            r_max: 10,
            kind: ThetaKind::Theta,
            certify: CertifyOptions::default(),
        }
    }
}

/// Outcome of one candidate `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub r: u32,
    pub status: TrialStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialStatus {
    Sos { identity_residual: f64 },
    NotSos,
    Inconclusive(String),
    /// Sos, but the assembled certificate failed verification.
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Approximation {
    pub f_eps: Polynomial,
    /// Minimum of `f + εP_{r0}` over `K`.
    pub fstar_eps: f64,
    pub certificate: QcCertificate,
    pub trace: Vec<Trial>,
}

/// Finds `f_ε` close to `f` together with a certificate for it.
pub fn approximate(
    f: &Polynomial,
    set: &SemiAlgebraicSet,
    epsilon: f64,
    opts: &DensifyOptions,
) -> Result<Approximation, DensifyError> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(DensifyError::InvalidEpsilon(epsilon));
    }
    let n = set.nvars();
    let f = f.with_nvars(n).map_err(CertifyError::from)?;
    let r0 = base_order(&f);
    let f_eps0 = &f + &opts.kind.poly(r0, n)?.scale(epsilon);
    let sol = kkt::minimize(&f_eps0, set, &opts.certify.kkt).map_err(CertifyError::from)?;
    let lag = build_lagrangian(&f_eps0, set, &sol, opts.certify.lagrangian_tol)?;
    let verify_opts = VerifyOptions {
        cert_tol: opts.certify.cert_tol,
        samples: opts.certify.samples,
        seed: opts.certify.kkt.seed,
    };
    let mut trace = Vec::new();
    for r in r0..=opts.r_max {
        let candidate = &lag.poly + &opts.kind.poly(r, n)?.scale(epsilon);
        let status = match sos::is_sos(&candidate, &opts.certify.sos).map_err(CertifyError::from)? {
            SosVerdict::NotSos(_) => TrialStatus::NotSos,
            SosVerdict::Inconclusive(why) => TrialStatus::Inconclusive(why),
            SosVerdict::Sos(dec) => {
                let record = PerturbationRecord::new(epsilon, r0, r, opts.kind, n)?;
                // fold f*_ε into σ as a constant square when it is nonnegative
                let (sigma, fstar) = if lag.fstar >= 0.0 {
                    (dec.with_constant(n, lag.fstar), 0.0)
                } else {
                    (dec, lag.fstar)
                };
                let mut cert = QcCertificate {
                    nvars: n,
                    sigma,
                    lambda: lag.lambda.clone(),
                    fstar,
                    claims_nonnegative: fstar >= 0.0,
                    xstar: lag.xstar.clone(),
                    perturbation: Some(record),
                    identity_residual: 0.0,
                    hessian_factor: None,
                };
                cert.identity_residual = cert
                    .identity_defect(&f, set)
                    .map_err(CertifyError::from)?
                    .l1_norm();
                let report = certify::verify(&cert, &f, set, &verify_opts);
                if report.passed() {
                    trace.push(Trial {
                        r,
                        status: TrialStatus::Sos {
                            identity_residual: cert.identity_residual,
                        },
                    });
                    return Ok(Approximation {
                        f_eps: cert.target(&f).map_err(CertifyError::from)?,
                        fstar_eps: lag.fstar,
                        certificate: cert,
                        trace,
                    });
                }
                let failed: Vec<&str> = report.failed().map(|c| c.name).collect();
                TrialStatus::Rejected(format!("verification failed: {}", failed.join(", ")))
            }
        };
        trace.push(Trial { r, status });
    }
    Err(DensifyError::Exhausted {
        r0,
        r_max: opts.r_max,
        trace,
    })
}

/// `max |a(x) − b(x)|` over uniform samples of `[−1, 1]^n`.
pub fn sup_distance_on_box(a: &Polynomial, b: &Polynomial, samples: usize, seed: u64) -> f64 {
    let n = a.nvars().max(b.nvars());
    let d = a.with_nvars(n).expect("widening") - b.with_nvars(n).expect("widening");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..samples {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        best = best.max(d.eval_unchecked(&x).abs());
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str, n: usize) -> Polynomial {
        Polynomial::parse(s, n).unwrap()
    }

    #[test]
    fn theta_examples() {
        assert_eq!(theta(1, 2).unwrap(), p("1 + x1^2 + x2^2", 2));
        assert_eq!(theta(3, 1).unwrap(), p("1 + x1^6", 1));
        for r in 1..6 {
            for n in 1..4 {
                assert_eq!(theta(r, n).unwrap().l1_norm(), (n + 1) as f64);
            }
        }
        assert_eq!(theta(0, 1), Err(DensifyError::InvalidOrder(0)));
    }

    #[test]
    fn theta_lower_examples() {
        assert_eq!(theta_lower(0, 2), p("2", 2));
        assert_eq!(theta_lower(1, 1), p("1 + x1^2", 1));
        assert_eq!(theta_lower(2, 1), p("1 + x1^2 + 0.5*x1^4", 1));
    }

    #[test]
    fn record_distance() {
        let rec = PerturbationRecord::new(0.1, 2, 2, ThetaKind::Theta, 1).unwrap();
        assert_eq!(rec.l1_distance, 0.1 * 4.0);
        let rec = PerturbationRecord::new(0.01, 2, 5, ThetaKind::Theta, 3).unwrap();
        assert_eq!(rec.l1_distance, 0.01 * 8.0);
    }

    #[test]
    fn shifted_square_succeeds_at_base_order() {
        let f = p("(x1 - 2)^2", 1);
        let k = SemiAlgebraicSet::new(1, vec![p("1 - x1", 1)]).unwrap();
        let a = approximate(&f, &k, 0.1, &DensifyOptions::default()).unwrap();
        let rec = a.certificate.perturbation.unwrap();
        assert_eq!((rec.r0, rec.r), (2, 2));
        assert_eq!(rec.l1_distance, 0.4);
        let pert = (theta(2, 1).unwrap() + theta(2, 1).unwrap()).scale(0.1);
        assert_eq!(a.f_eps, &f + &pert);
        // subtraction rounds the constant term 4 + 0.2 − 4
        assert!((&a.f_eps - &f - pert).max_abs_coeff() <= 4.0 * f64::EPSILON * 4.0);
        assert_eq!(a.certificate.fstar, 0.0);
    }

    #[test]
    fn zero_objective() {
        let f = Polynomial::zero(2);
        let k = SemiAlgebraicSet::new(2, vec![p("1 - x1^2 - x2^2", 2)]).unwrap();
        let a = approximate(&f, &k, 0.5, &DensifyOptions::default()).unwrap();
        let rec = a.certificate.perturbation.unwrap();
        assert_eq!(rec.r0, 1);
        assert_eq!(a.f_eps, (theta(1, 2).unwrap() + theta(rec.r, 2).unwrap()).scale(0.5));
        assert_eq!(a.certificate.lambda, vec![0.0]);
    }

    #[test]
    fn rejects_nonpositive_epsilon() {
        let f = p("x1^2", 1);
        let k = SemiAlgebraicSet::unconstrained(1);
        for e in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                approximate(&f, &k, e, &DensifyOptions::default()),
                Err(DensifyError::InvalidEpsilon(_))
            ));
        }
    }

    #[test]
    fn theta_lower_path() {
        let f = p("(x1 - 2)^2", 1);
        let k = SemiAlgebraicSet::new(1, vec![p("1 - x1", 1)]).unwrap();
        let opts = DensifyOptions {
            kind: ThetaKind::ThetaLower,
            ..DensifyOptions::default()
        };
        let a = approximate(&f, &k, 0.01, &opts).unwrap();
        assert!(sup_distance_on_box(&a.f_eps, &f, 200, 0) <= 0.01 * 2.0 * std::f64::consts::E);
    }
}
