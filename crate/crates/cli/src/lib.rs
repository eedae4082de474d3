//! Command-line front end. [`run`] executes one invocation and returns its
//! exit status, writing to the supplied streams.

pub mod document;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qcert::certify::{
    self, CertifyError, CertifyOptions, CertifyOutcome, Gate, SosConvexPath, VerifyOptions,
};
use qcert::densify::{self, DensifyError, DensifyOptions, TrialStatus};
use qcert::kkt::{self, KktError};
use qcert::polyring::{default_names, Polynomial};
use qcert::sos::{self, NotSos, SosConvexVerdict, SosOptions, SosVerdict};

use document::{CertificateDocument, Problem, ProblemFile};

pub mod exit {
    pub const OK: i32 = 0;
    /// Not sos / verification failed / input violates convexity assumptions.
    pub const NEGATIVE: i32 = 1;
    pub const INCONCLUSIVE: i32 = 2;
    pub const NEEDS_PERTURBATION: i32 = 3;
    pub const UNBOUNDED: i32 = 4;
    pub const NOT_APPLICABLE: i32 = 5;
    pub const USAGE: i32 = 64;
}

#[derive(Parser, Debug)]
#[command(name = "qcert", version, about = "Convex sum-of-squares certificates for polynomial optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide whether a polynomial is a sum of squares.
    CheckSos(PolyArgs),
    /// Decide whether a polynomial is sos-convex.
    CheckSosConvex(PolyArgs),
    /// Minimize the objective of a problem file.
    Minimize(SolveArgs),
    /// Produce a certificate for a problem file.
    Certify(CertifyArgs),
    /// Check a certificate against a problem file.
    Verify(VerifyArgs),
    /// Run the perturbation pipeline for several epsilons.
    DensitySweep(SweepArgs),
}

#[derive(Args, Debug)]
struct PolyArgs {
    /// Polynomial text, e.g. "x1^2 - 2*x1 + 1".
    #[arg(allow_hyphen_values = true)]
    poly: Option<String>,
    /// Read the polynomial from a file instead.
    #[arg(long, conflicts_with = "poly")]
    file: Option<PathBuf>,
    /// Number of variables x1..xn (inferred when omitted).
    #[arg(long)]
    nvars: Option<usize>,
    /// Comma-separated variable names.
    #[arg(long, value_delimiter = ',', conflicts_with = "nvars")]
    vars: Option<Vec<String>>,
    #[command(flatten)]
    prune: PruneArgs,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct PruneArgs {
    /// Restrict Gram bases to the half Newton polytope (default).
    #[arg(long, overrides_with = "no_prune")]
    prune: bool,
    #[arg(long, overrides_with = "prune")]
    no_prune: bool,
}

impl PruneArgs {
    fn resolve(&self, file: Option<bool>) -> bool {
        if self.no_prune {
            false
        } else if self.prune {
            true
        } else {
            file.unwrap_or(true)
        }
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Problem file (TOML or JSON).
    problem: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol_kkt: Option<f64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    problem: PathBuf,
    /// Fall back to the perturbation pipeline with this epsilon.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    r_max: Option<u32>,
    /// Take the sos-convex path and record the Hessian factor.
    #[arg(long)]
    sos_convex: bool,
    #[command(flatten)]
    prune: PruneArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol_kkt: Option<f64>,
    #[arg(long)]
    tol_cert: Option<f64>,
    /// Also write the certificate to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    certificate: PathBuf,
    problem: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol_cert: Option<f64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    problem: PathBuf,
    /// Epsilons to try (repeat the flag or separate by commas).
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    epsilon: Vec<f64>,
    #[arg(long)]
    r_max: Option<u32>,
    #[command(flatten)]
    prune: PruneArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol_kkt: Option<f64>,
    #[arg(long)]
    tol_cert: Option<f64>,
    #[arg(long)]
    json: bool,
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn usage(&mut self, msg: impl std::fmt::Display) -> i32 {
        let _ = writeln!(self.err, "error: {msg}");
        exit::USAGE
    }
}

/// Runs one invocation; `args` includes the program name.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let mut io = Io { out, err };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(io.out, "{e}");
                    exit::OK
                }
                _ => {
                    let _ = write!(io.err, "{e}");
                    exit::USAGE
                }
            };
        }
    };
    match cli.command {
        Command::CheckSos(a) => cmd_check_sos(&a, &mut io),
        Command::CheckSosConvex(a) => cmd_check_sos_convex(&a, &mut io),
        Command::Minimize(a) => cmd_minimize(&a, &mut io),
        Command::Certify(a) => cmd_certify(&a, &mut io),
        Command::Verify(a) => cmd_verify(&a, &mut io),
        Command::DensitySweep(a) => cmd_density_sweep(&a, &mut io),
    }
}

fn read_file(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn parse_poly_args(a: &PolyArgs) -> Result<(Polynomial, Vec<String>), String> {
    let text = match (&a.poly, &a.file) {
        (Some(p), _) => p.clone(),
        (None, Some(f)) => read_file(f)?,
        (None, None) => return Err("give a polynomial or --file".into()),
    };
    let parsed = match (&a.vars, a.nvars) {
        (Some(names), _) => Polynomial::parse_with_names(&text, names).map(|p| (p, names.clone())),
        (None, Some(n)) => Polynomial::parse(&text, n).map(|p| (p, default_names(n))),
        (None, None) => Polynomial::parse_infer(&text).map(|p| {
            let n = p.nvars();
            (p, default_names(n))
        }),
    };
    parsed.map_err(|e| e.to_string())
}

fn load_problem(path: &Path) -> Result<Problem, String> {
    let text = read_file(path)?;
    let pf = ProblemFile::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    pf.build().map_err(|e| format!("{}: {e}", path.display()))
}

fn sos_options(prune: bool) -> SosOptions {
    SosOptions {
        prune,
        ..SosOptions::default()
    }
}

fn emit_json(io: &mut Io, value: &impl Serialize) {
    let _ = writeln!(io.out, "{}", serde_json::to_string_pretty(value).expect("serializable"));
}

#[derive(Serialize)]
struct SosReport {
    verdict: &'static str,
    factors: Vec<String>,
    residual: Option<f64>,
    reason: Option<String>,
    functional: Vec<(String, f64)>,
}

fn not_sos_report(reason: &NotSos, names: &[String]) -> SosReport {
    let (why, functional) = match reason {
        NotSos::OddDegree(d) => (format!("odd degree {d}"), Vec::new()),
        NotSos::Dual { functional, .. } => (
            "dual certificate: L(p) = 1 and the localizing matrix is negative semidefinite".into(),
            functional
                .iter()
                .map(|(m, v)| (m.display_with(names).to_string(), *v))
                .collect(),
        ),
    };
    SosReport {
        verdict: "not_sos",
        factors: Vec::new(),
        residual: None,
        reason: Some(why),
        functional,
    }
}

fn print_sos_report(io: &mut Io, r: &SosReport, json: bool) {
    if json {
        emit_json(io, r);
        return;
    }
    let _ = writeln!(io.out, "verdict: {}", r.verdict.replace('_', " "));
    if !r.factors.is_empty() {
        let _ = writeln!(io.out, "factors:");
        for q in &r.factors {
            let _ = writeln!(io.out, "  {q}");
        }
    }
    if let Some(res) = r.residual {
        let _ = writeln!(io.out, "residual: {res:e}");
    }
    if let Some(why) = &r.reason {
        let _ = writeln!(io.out, "reason: {why}");
    }
    for (m, v) in &r.functional {
        let _ = writeln!(io.out, "  L({m}) = {v:e}");
    }
}

fn cmd_check_sos(a: &PolyArgs, io: &mut Io) -> i32 {
    let (f, names) = match parse_poly_args(a) {
        Ok(v) => v,
        Err(e) => return io.usage(e),
    };
    let verdict = match sos::is_sos(&f, &sos_options(a.prune.resolve(None))) {
        Ok(v) => v,
        Err(e) => return io.usage(e),
    };
    let (report, code) = match verdict {
        SosVerdict::Sos(dec) => (
            SosReport {
                verdict: "sos",
                factors: dec.factors.iter().map(|q| q.format_with(&names)).collect(),
                residual: Some(dec.residual),
                reason: None,
                functional: Vec::new(),
            },
            exit::OK,
        ),
        SosVerdict::NotSos(reason) => (not_sos_report(&reason, &names), exit::NEGATIVE),
        SosVerdict::Inconclusive(why) => (
            SosReport {
                verdict: "inconclusive",
                factors: Vec::new(),
                residual: None,
                reason: Some(why),
                functional: Vec::new(),
            },
            exit::INCONCLUSIVE,
        ),
    };
    print_sos_report(io, &report, a.json);
    code
}

fn cmd_check_sos_convex(a: &PolyArgs, io: &mut Io) -> i32 {
    let (f, names) = match parse_poly_args(a) {
        Ok(v) => v,
        Err(e) => return io.usage(e),
    };
    let verdict = match sos::is_sos_convex(&f, &sos_options(a.prune.resolve(None))) {
        Ok(v) => v,
        Err(e) => return io.usage(e),
    };
    match verdict {
        SosConvexVerdict::SosConvex(w) => {
            // rows of F, entries separated by "; "
            let rows: Vec<String> = (0..w.factor.rows())
                .map(|i| {
                    let row: Vec<String> =
                        w.factor.row(i).iter().map(|p| p.format_with(&names)).collect();
                    row.join("; ")
                })
                .collect();
            if a.json {
                let report = SosReport {
                    verdict: "sos_convex",
                    factors: rows,
                    residual: Some(w.residual),
                    reason: None,
                    functional: Vec::new(),
                };
                emit_json(io, &report);
            } else {
                let _ = writeln!(io.out, "verdict: sos-convex");
                let _ = writeln!(io.out, "hessian factor F (rows, entries separated by ';'):");
                for r in &rows {
                    let _ = writeln!(io.out, "  [{r}]");
                }
                let _ = writeln!(io.out, "residual: {:e}", w.residual);
            }
            exit::OK
        }
        SosConvexVerdict::NotSosConvex(reason) => {
            let mut r = not_sos_report(&reason, &names);
            r.verdict = "not_sos_convex";
            // the functional lives on the auxiliary (x, y) variables
            r.functional.clear();
            print_sos_report(io, &r, a.json);
            exit::NEGATIVE
        }
        SosConvexVerdict::Inconclusive(why) => {
            let r = SosReport {
                verdict: "inconclusive",
                factors: Vec::new(),
                residual: None,
                reason: Some(why),
                functional: Vec::new(),
            };
            print_sos_report(io, &r, a.json);
            exit::INCONCLUSIVE
        }
    }
}

fn kkt_options(problem: &Problem, seed: Option<u64>, tol: Option<f64>) -> kkt::KktOptions {
    let defaults = kkt::KktOptions::default();
    kkt::KktOptions {
        seed: seed.or(problem.options.seed).unwrap_or(0),
        kkt_tol: tol.or(problem.options.tol_kkt).unwrap_or(defaults.kkt_tol),
        ..defaults
    }
}

fn kkt_exit(e: &KktError) -> i32 {
    match e {
        KktError::Unbounded { .. } | KktError::NoInteriorFound => exit::UNBOUNDED,
        KktError::NotConvex { .. } | KktError::NotConcave { .. } => exit::NEGATIVE,
        KktError::InvalidSlaterPoint { .. } | KktError::Poly(_) => exit::USAGE,
        KktError::NewtonFailure { .. } => exit::INCONCLUSIVE,
    }
}

fn certify_exit(e: &CertifyError) -> i32 {
    match e {
        CertifyError::Kkt(k) => kkt_exit(k),
        CertifyError::Poly(_) => exit::USAGE,
        CertifyError::Sos(_) | CertifyError::Lagrangian { .. } => exit::INCONCLUSIVE,
    }
}

#[derive(Serialize)]
struct MinimizeReport {
    xstar: Vec<f64>,
    fstar: f64,
    lambda: Vec<f64>,
    stationarity_residual: f64,
    complementarity_residual: f64,
}

fn cmd_minimize(a: &SolveArgs, io: &mut Io) -> i32 {
    let problem = match load_problem(&a.problem) {
        Ok(p) => p,
        Err(e) => return io.usage(e),
    };
    let opts = kkt_options(&problem, a.seed, a.tol_kkt);
    match kkt::minimize(&problem.objective, &problem.set, &opts) {
        Ok(sol) => {
            let r = MinimizeReport {
                xstar: sol.xstar,
                fstar: sol.fstar,
                lambda: sol.lambda,
                stationarity_residual: sol.stationarity_residual,
                complementarity_residual: sol.complementarity_residual,
            };
            if a.json {
                emit_json(io, &r);
            } else {
                let _ = writeln!(io.out, "xstar = {:?}", r.xstar);
                let _ = writeln!(io.out, "fstar = {}", r.fstar);
                let _ = writeln!(io.out, "lambda = {:?}", r.lambda);
                let _ = writeln!(io.out, "stationarity_residual = {:e}", r.stationarity_residual);
                let _ = writeln!(io.out, "complementarity_residual = {:e}", r.complementarity_residual);
            }
            exit::OK
        }
        Err(e) => {
            let _ = writeln!(io.err, "{e}");
            kkt_exit(&e)
        }
    }
}

fn certify_options(
    problem: &Problem,
    prune: &PruneArgs,
    seed: Option<u64>,
    tol_kkt: Option<f64>,
    tol_cert: Option<f64>,
) -> CertifyOptions {
    let mut o = CertifyOptions {
        kkt: kkt_options(problem, seed, tol_kkt),
        sos: sos_options(prune.resolve(problem.options.prune)),
        ..CertifyOptions::default()
    };
    if let Some(t) = tol_cert.or(problem.options.tol_cert) {
        o.cert_tol = t;
    }
    o
}

fn write_certificate(
    io: &mut Io,
    doc: &CertificateDocument,
    json: bool,
    out: Option<&Path>,
) -> Result<(), String> {
    let text = if json { doc.to_json() } else { doc.to_toml() };
    let _ = write!(io.out, "{text}");
    if let Some(path) = out {
        fs::write(path, &text).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

fn check_epsilon(e: f64) -> Result<f64, String> {
    if e > 0.0 && e.is_finite() {
        Ok(e)
    } else {
        Err(format!("--epsilon must be positive, got {e}"))
    }
}

fn cmd_certify(a: &CertifyArgs, io: &mut Io) -> i32 {
    let problem = match load_problem(&a.problem) {
        Ok(p) => p,
        Err(e) => return io.usage(e),
    };
    let epsilon = match a.epsilon.or(problem.options.epsilon).map(check_epsilon).transpose() {
        Ok(e) => e,
        Err(e) => return io.usage(e),
    };
    let opts = certify_options(&problem, &a.prune, a.seed, a.tol_kkt, a.tol_cert);
    let (f, set) = (&problem.objective, &problem.set);
    let outcome = if a.sos_convex {
        match certify::certify_sos_convex_path(f, set, &opts) {
            Ok(SosConvexPath::Applied(o)) => Ok(o),
            Ok(SosConvexPath::NotApplicable(gate)) => {
                let which = match gate {
                    Gate::Objective => "objective".to_string(),
                    Gate::Constraint(j) => format!("constraint {}", j + 1),
                };
                let _ = writeln!(io.err, "not applicable: {which} fails the sos-convexity test");
                return exit::NOT_APPLICABLE;
            }
            Err(e) => Err(e),
        }
    } else {
        certify::certify(f, set, &opts)
    };
    let cert = match outcome {
        Ok(CertifyOutcome::Certified(c)) => c,
        Ok(CertifyOutcome::NeedsPerturbation { .. }) if epsilon.is_some() => {
            let dopts = DensifyOptions {
                r_max: a.r_max.or(problem.options.r_max).unwrap_or(10),
                certify: opts,
                ..DensifyOptions::default()
            };
            match densify::approximate(f, set, epsilon.expect("checked"), &dopts) {
                Ok(approx) => approx.certificate,
                Err(e) => {
                    let _ = writeln!(io.err, "perturbation failed: {e}");
                    return match &e {
                        DensifyError::Certify(c) => certify_exit(c),
                        DensifyError::InvalidEpsilon(_) | DensifyError::InvalidOrder(_) => exit::USAGE,
                        DensifyError::Exhausted { .. } => exit::INCONCLUSIVE,
                    };
                }
            }
        }
        Ok(CertifyOutcome::NeedsPerturbation { .. }) => {
            let _ = writeln!(
                io.err,
                "needs perturbation: the Lagrangian is not a sum of squares; rerun with --epsilon"
            );
            return exit::NEEDS_PERTURBATION;
        }
        Ok(CertifyOutcome::Inconclusive(why)) => {
            let _ = writeln!(io.err, "inconclusive: {why}");
            return exit::INCONCLUSIVE;
        }
        Err(e) => {
            let _ = writeln!(io.err, "{e}");
            return certify_exit(&e);
        }
    };
    let doc = CertificateDocument::from_certificate(&cert, &problem.names);
    if let Err(e) = write_certificate(io, &doc, a.json, a.out.as_deref()) {
        return io.usage(e);
    }
    exit::OK
}

#[derive(Serialize)]
struct CheckRow<'a> {
    name: &'a str,
    passed: bool,
    value: f64,
    detail: &'a str,
}

fn cmd_verify(a: &VerifyArgs, io: &mut Io) -> i32 {
    let problem = match load_problem(&a.problem) {
        Ok(p) => p,
        Err(e) => return io.usage(e),
    };
    let doc = match read_file(&a.certificate)
        .and_then(|t| CertificateDocument::parse(&t).map_err(|e| e.to_string()))
    {
        Ok(d) => d,
        Err(e) => return io.usage(format!("{}: {e}", a.certificate.display())),
    };
    if doc.nvars != problem.set.nvars() || doc.variables != problem.names {
        return io.usage("certificate variables do not match the problem");
    }
    let cert = match doc.to_certificate() {
        Ok(c) => c,
        Err(e) => return io.usage(format!("{}: {e}", a.certificate.display())),
    };
    let vopts = VerifyOptions {
        cert_tol: a.tol_cert.or(problem.options.tol_cert).unwrap_or(1e-6),
        seed: a.seed.or(problem.options.seed).unwrap_or(0),
        ..VerifyOptions::default()
    };
    let report = certify::verify(&cert, &problem.objective, &problem.set, &vopts);
    if a.json {
        let rows: Vec<CheckRow> = report
            .checks
            .iter()
            .map(|c| CheckRow {
                name: c.name,
                passed: c.passed,
                value: c.value,
                detail: &c.detail,
            })
            .collect();
        emit_json(io, &rows);
    } else {
        for c in &report.checks {
            let _ = writeln!(
                io.out,
                "{:<20} {:<4} {:>12.3e}  {}",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.value,
                c.detail
            );
        }
        let _ = writeln!(io.out, "result: {}", if report.passed() { "pass" } else { "fail" });
    }
    if report.passed() {
        exit::OK
    } else {
        exit::NEGATIVE
    }
}

#[derive(Serialize)]
struct SweepRow {
    epsilon: f64,
    r: Option<u32>,
    l1_distance: Option<f64>,
    identity_residual: Option<f64>,
    status: String,
}

fn cmd_density_sweep(a: &SweepArgs, io: &mut Io) -> i32 {
    for &e in &a.epsilon {
        if let Err(msg) = check_epsilon(e) {
            return io.usage(msg);
        }
    }
    let problem = match load_problem(&a.problem) {
        Ok(p) => p,
        Err(e) => return io.usage(e),
    };
    let dopts = DensifyOptions {
        r_max: a.r_max.or(problem.options.r_max).unwrap_or(10),
        certify: certify_options(&problem, &a.prune, a.seed, a.tol_kkt, a.tol_cert),
        ..DensifyOptions::default()
    };
    let rows: Vec<SweepRow> = a
        .epsilon
        .iter()
        .map(|&eps| match densify::approximate(&problem.objective, &problem.set, eps, &dopts) {
            Ok(ap) => {
                let rec = ap.certificate.perturbation.expect("perturbation certificates carry a record");
                SweepRow {
                    epsilon: eps,
                    r: Some(rec.r),
                    l1_distance: Some(rec.l1_distance),
                    identity_residual: Some(ap.certificate.identity_residual),
                    status: "ok".into(),
                }
            }
            Err(e) => SweepRow {
                epsilon: eps,
                r: None,
                l1_distance: None,
                identity_residual: None,
                status: match e {
                    DensifyError::Exhausted { trace, .. } => format!(
                        "failed: r_max exhausted ({} trials: {})",
                        trace.len(),
                        trace
                            .iter()
                            .map(|t| format!("r={} {}", t.r, trial_word(&t.status)))
                            .collect::<Vec<_>>()
                            .join(", ")
                    ),
                    other => format!("failed: {other}"),
                },
            },
        })
        .collect();
    if a.json {
        emit_json(io, &rows);
    } else {
        let _ = writeln!(
            io.out,
            "{:>12}  {:>3}  {:>14}  {:>18}  status",
            "epsilon", "r", "l1_distance", "identity_residual"
        );
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        for row in &rows {
            let _ = writeln!(
                io.out,
                "{:>12}  {:>3}  {:>14}  {:>18}  {}",
                row.epsilon,
                opt(row.r.map(|r| r.to_string())),
                opt(row.l1_distance.map(|d| d.to_string())),
                opt(row.identity_residual.map(|d| format!("{d:.3e}"))),
                row.status
            );
        }
    }
    if rows.iter().all(|r| r.status == "ok") {
        exit::OK
    } else {
        exit::NEGATIVE
    }
}

fn trial_word(s: &TrialStatus) -> String {
    match s {
        TrialStatus::Sos { .. } => "sos".into(),
        TrialStatus::NotSos => "not sos".into(),
        TrialStatus::Inconclusive(_) => "inconclusive".into(),
        TrialStatus::Rejected(why) => format!("rejected ({why})"),
    }
}
