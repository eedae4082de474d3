//! End-to-end runs of the `qcert` binary, one test per exit path.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn qcert(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_qcert"))
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SHIFTED_SQUARE: &str = r#"
nvars = 1
variables = ["x"]
objective = "(x - 2)^2"
constraints = ["1 - x"]
"#;

const HALF_PLANE: &str = r#"
nvars = 2
objective = "x1^2 + x2^2"
constraints = ["x1 + x2 - 2"]
"#;

#[test]
fn check_sos_exit_codes() {
    let r = qcert(&["check-sos", "x1^2-2*x1+1"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("verdict: sos"));
    assert!(r.stdout.contains("x1 - 1"), "{}", r.stdout);

    assert_eq!(qcert(&["check-sos", "-1"]).code, 1);
    let r = qcert(&["check-sos", "x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1"]);
    assert_eq!(r.code, 1);
    assert!(r.stdout.contains("dual certificate"));
    assert_eq!(qcert(&["check-sos", "--no-prune", "x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1"]).code, 1);
    assert_eq!(qcert(&["check-sos", "x1^3"]).code, 1);

    let r = qcert(&["check-sos", "x1^2 +* 1"]);
    assert_eq!(r.code, 64);
    assert!(r.stderr.contains("position"), "{}", r.stderr);
    assert_eq!(qcert(&["check-sos", "--nvars", "1", "x2^2"]).code, 64);
}

#[test]
fn check_sos_json_and_named_variables() {
    let r = qcert(&["check-sos", "--vars", "a,b", "--json", "(a - b)^2 + b^2"]);
    assert_eq!(r.code, 0);
    let v: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["verdict"], "sos");
    assert!(v["residual"].as_f64().unwrap() <= 1e-6);
    assert_eq!(v["factors"].as_array().unwrap().len(), 2);
}

#[test]
fn check_sos_reads_files() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "p.txt", "x1^4 + 2*x1^2*x2^2 + x2^4\n");
    assert_eq!(qcert(&["check-sos", "--file", s(&p)]).code, 0);
    assert_eq!(qcert(&["check-sos", "--file", "/nonexistent/poly.txt"]).code, 64);
}

#[test]
fn check_sos_convex_exit_codes() {
    let r = qcert(&["check-sos-convex", "x1^4"]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("3.464101615137754"), "{}", r.stdout);
    assert_eq!(qcert(&["check-sos-convex", "x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1"]).code, 1);
    assert_eq!(qcert(&["check-sos-convex", "-x1^2"]).code, 1);
}

#[test]
fn minimize_reports_kkt_point() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "p.toml", SHIFTED_SQUARE);
    let r = qcert(&["minimize", s(&p), "--json"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    assert!((v["xstar"][0].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!((v["fstar"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!((v["lambda"][0].as_f64().unwrap() - 2.0).abs() < 1e-6);
}

#[test]
fn certify_verify_closed_loop() {
    let dir = TempDir::new().unwrap();
    for (name, text) in [("a.toml", SHIFTED_SQUARE), ("b.toml", HALF_PLANE)] {
        let p = write(&dir, name, text);
        let cert = dir.path().join(format!("{name}.cert"));
        let r = qcert(&["certify", s(&p), "--out", s(&cert)]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        assert_eq!(fs::read_to_string(&cert).unwrap(), r.stdout);
        let v = qcert(&["verify", s(&cert), s(&p)]);
        assert_eq!(v.code, 0, "{}", v.stdout);
        assert!(v.stdout.ends_with("result: pass\n"));

        let jcert = dir.path().join(format!("{name}.json"));
        assert_eq!(qcert(&["certify", s(&p), "--json", "--out", s(&jcert)]).code, 0);
        assert_eq!(qcert(&["verify", s(&jcert), s(&p)]).code, 0);
    }
}

#[test]
fn certificate_document_values() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "p.toml", SHIFTED_SQUARE);
    let r = qcert(&["certify", s(&p), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["format"], "qcert-certificate");
    assert_eq!(v["variables"][0], "x");
    assert!((v["fstar"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!((v["lambda"][0].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!(v["residuals"]["identity"].as_f64().unwrap() <= 1e-6);
}

fn mutate_json(cert: &str, f: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value = serde_json::from_str(cert).unwrap();
    f(&mut v);
    serde_json::to_string(&v).unwrap()
}

#[test]
fn verify_rejects_mutations() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "p.toml", SHIFTED_SQUARE);
    let cert = qcert(&["certify", s(&p), "--json"]).stdout;

    let negated = write(&dir, "neg.json", &mutate_json(&cert, |v| {
        let l = v["lambda"][0].as_f64().unwrap();
        v["lambda"][0] = (-l).into();
    }));
    let r = qcert(&["verify", s(&negated), s(&p)]);
    assert_eq!(r.code, 1);
    assert!(r.stdout.lines().any(|l| l.starts_with("lambda_nonnegative") && l.contains("FAIL")));

    let dropped = write(&dir, "drop.json", &mutate_json(&cert, |v| {
        v["sigma"]["factors"].as_array_mut().unwrap().pop();
    }));
    let r = qcert(&["verify", s(&dropped), s(&p), "--json"]);
    assert_eq!(r.code, 1);
    let rows: Vec<serde_json::Value> = serde_json::from_str(&r.stdout).unwrap();
    let identity = rows.iter().find(|c| c["name"] == "identity").unwrap();
    assert_eq!(identity["passed"], false);
    assert!(identity["value"].as_f64().unwrap() > 0.1);
}

#[test]
fn verify_rejects_malformed_documents() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "p.toml", SHIFTED_SQUARE);
    let garbage = write(&dir, "g.toml", "format = [");
    assert_eq!(qcert(&["verify", s(&garbage), s(&p)]).code, 64);
    let cert = qcert(&["certify", s(&p)]).stdout;
    let wrong = write(&dir, "w.toml", &cert.replace("qcert-certificate", "other"));
    assert_eq!(qcert(&["verify", s(&wrong), s(&p)]).code, 64);
    let badpoly = write(&dir, "b.toml", &cert.replace("factors = [\"", "factors = [\"y + "));
    assert_eq!(qcert(&["verify", s(&badpoly), s(&p)]).code, 64);
    let other = write(&dir, "o.toml", HALF_PLANE);
    assert_eq!(qcert(&["verify", s(&write(&dir, "c.toml", &cert)), s(&other)]).code, 64);
}

#[test]
fn certify_unbounded_and_empty_interior() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "u.toml", "nvars = 1\nobjective = \"x1\"\nconstraints = [\"1 - x1\"]\n");
    let r = qcert(&["certify", s(&p)]);
    assert_eq!(r.code, 4, "{}", r.stderr);
    assert_eq!(qcert(&["minimize", s(&p)]).code, 4);
    let p = write(&dir, "e.toml", "nvars = 1\nobjective = \"x1^2\"\nconstraints = [\"-x1^2\"]\n");
    assert_eq!(qcert(&["certify", s(&p)]).code, 4);
}

#[test]
fn certify_rejects_nonconvex_input() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "n.toml", "nvars = 1\nobjective = \"x1^3\"\nconstraints = [\"1 - x1^2\"]\n");
    let r = qcert(&["certify", s(&p)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("convex"), "{}", r.stderr);
    let p = write(&dir, "c.toml", "nvars = 1\nobjective = \"x1^2\"\nconstraints = [\"x1^2 - 1\"]\n");
    assert_eq!(qcert(&["certify", s(&p)]).code, 1);
}

/// Nonconvex only for |x| > 400, beyond the Hessian sampling screen, so the
/// Lagrangian at the local minimizer 0 has a negative leading term.
const SLIPS_SCREEN: &str = "nvars = 1\nobjective = \"x1^2 - 0.000001*x1^4\"\n";

#[test]
fn certify_needs_perturbation_then_epsilon_rescues() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "p.toml", SLIPS_SCREEN);
    let r = qcert(&["certify", s(&p)]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert!(r.stderr.contains("--epsilon"));

    let cert = dir.path().join("c.toml");
    let r = qcert(&["certify", s(&p), "--epsilon", "0.1", "--out", s(&cert)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("[perturbation]"));
    assert_eq!(qcert(&["verify", s(&cert), s(&p)]).code, 0);
}

#[test]
fn certify_inconclusive_paths() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "p.toml", HALF_PLANE);
    let r = qcert(&["certify", s(&p), "--tol-cert", "1e-300"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.starts_with("inconclusive"), "{}", r.stderr);
    assert_eq!(qcert(&["certify", s(&p), "--tol-kkt", "1e-30"]).code, 2);
}

#[test]
fn sos_convex_path_and_gate() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "p.toml", "nvars = 1\nobjective = \"x1^4\"\nconstraints = [\"1 - x1^2\"]\n");
    let cert = dir.path().join("c.toml");
    let r = qcert(&["certify", s(&p), "--sos-convex", "--out", s(&cert)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("hessian_factor"));
    let v = qcert(&["verify", s(&cert), s(&p)]);
    assert_eq!(v.code, 0, "{}", v.stdout);
    assert!(v.stdout.contains("hessian_factor"));

    let gated = write(
        &dir,
        "g.toml",
        "nvars = 2\nobjective = \"x1^2 + x2^2\"\nconstraints = [\"3*x1^2*x2^2 - x1^4*x2^2 - x1^2*x2^4\"]\n",
    );
    let r = qcert(&["certify", s(&gated), "--sos-convex"]);
    assert_eq!(r.code, 5);
    assert!(r.stderr.contains("constraint 1"), "{}", r.stderr);
}

#[test]
fn density_sweep_table_and_rows() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "p.toml", SHIFTED_SQUARE);
    let r = qcert(&["density-sweep", s(&p), "--epsilon", "0.1,0.01,0.001"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].contains(" 0.4 ") && lines[1].ends_with("ok"), "{}", lines[1]);

    let r = qcert(&["density-sweep", s(&p), "--epsilon", "0.1", "--epsilon", "0.01", "--json"]);
    let rows: Vec<serde_json::Value> = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(rows.len(), 2);
    for (row, eps) in rows.iter().zip([0.1, 0.01]) {
        assert_eq!(row["r"], 2);
        assert!((row["l1_distance"].as_f64().unwrap() - 4.0 * eps).abs() <= 1e-15);
    }

    assert_eq!(qcert(&["density-sweep", s(&p), "--epsilon", "0"]).code, 64);
    assert_eq!(qcert(&["density-sweep", s(&p), "--epsilon", "0.1,-1"]).code, 64);
    assert_eq!(qcert(&["certify", s(&p), "--epsilon", "0"]).code, 64);
}

#[test]
fn density_sweep_failed_row_exits_one() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "p.toml", "nvars = 1\nobjective = \"x1^2\"\nconstraints = [\"-x1^2\"]\n");
    let r = qcert(&["density-sweep", s(&p), "--epsilon", "0.1"]);
    assert_eq!(r.code, 1);
    assert!(r.stdout.contains("failed"), "{}", r.stdout);
}

#[test]
fn output_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "p.toml", HALF_PLANE);
    let a = qcert(&["certify", s(&p), "--seed", "7"]);
    let b = qcert(&["certify", s(&p), "--seed", "7"]);
    assert_eq!(a.code, 0);
    assert_eq!(a.stdout, b.stdout);
    let a = qcert(&["density-sweep", s(&p), "--epsilon", "0.01", "--json"]);
    let b = qcert(&["density-sweep", s(&p), "--epsilon", "0.01", "--json"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn problem_file_errors_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "p.toml", "nvars = 1\nobjective = \"x2\"\n");
    let r = qcert(&["certify", s(&p)]);
    assert_eq!(r.code, 64);
    assert!(r.stderr.contains("objective"), "{}", r.stderr);
    let p = write(&dir, "s.toml", "nvars = 1\nobjective = \"x1^2\"\nconstraints = [\"1 - x1\"]\nslater_point = [2.0]\n");
    assert_eq!(qcert(&["certify", s(&p)]).code, 64);
    let p = write(&dir, "j.json", r#"{"nvars": 1, "objective": "(x1 - 2)^2", "constraints": ["1 - x1"]}"#);
    assert_eq!(qcert(&["certify", s(&p)]).code, 0);
}

#[test]
fn clap_usage_and_help() {
    assert_eq!(qcert(&["--help"]).code, 0);
    assert_eq!(qcert(&["--version"]).code, 0);
    assert_eq!(qcert(&[]).code, 64);
    assert_eq!(qcert(&["frobnicate"]).code, 64);
    assert_eq!(qcert(&["density-sweep", "p.toml"]).code, 64);
}
