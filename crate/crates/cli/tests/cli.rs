use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use irk_spectral::harness::{convergence_study, dyadic_steps, StudyOptions};
use irk_spectral::problems::lookup;
use irk_spectral::tableau::gauss_legendre;
use serde_json::Value;
use tempfile::TempDir;

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irk-spectral"))
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn summary(out: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join(format!("{name}.json"))).unwrap()).unwrap()
}

const CONVERGENCE: &str = r#"{
  "experiment": "convergence",
  "problem": "nls-cubic-periodic",
  "tableau": "gl:1",
  "n": 64,
  "T": 0.5,
  "h_max": 0.02,
  "levels": 6,
  "fp_tol": 1e-13
}"#;

#[test]
fn convergence_run_matches_library_study() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "conv.json", CONVERGENCE);
    let out = dir.path().join("out");
    let res = run(&cfg, &out, &[]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.starts_with("PASS convergence"), "{stdout}");

    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "h,steps,error_Y0,mean_iters,max_residual,contraction_est");
    assert_eq!(lines.len(), 7);

    let s = summary(&out, "convergence");
    let p = lookup("nls-cubic-periodic").unwrap();
    let t = gauss_legendre(1).unwrap();
    let report = convergence_study(
        &p,
        &t,
        &p.initial_state().unwrap(),
        0.5,
        &dyadic_steps(0.02, 6),
        &StudyOptions::with_fp_tol(1e-13),
    )
    .unwrap();
    assert_eq!(s["fitted_order"].as_f64().unwrap(), report.fitted_order);
    assert!((report.fitted_order - 2.0).abs() <= 0.15);
    assert_eq!(s["pass"], Value::Bool(true));
    assert_eq!(s["reference"]["method"], "gl:3");
    let mut expected = Vec::new();
    report.write_csv(&mut expected).unwrap();
    assert_eq!(csv.as_bytes(), &expected[..]);
}

#[test]
fn reruns_are_byte_identical_and_echo_resolves() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "tan.json",
        r#"{"experiment": "tangent-check", "problem": "nls-cubic-periodic", "n": 16,
            "T": 0.2, "h_list": [0.02, 0.01, 0.005], "seed": 11}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&cfg, &a, &[]).status.code().is_some());
    assert!(run(&cfg, &b, &["--threads", "1"]).status.code().is_some());
    for f in ["tangent-check.csv", "tangent-check.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    // the echoed config reproduces the run on its own
    let s = summary(&a, "tangent-check");
    let echo = &s["config"];
    assert_eq!(echo["seed"], 11);
    assert_eq!(echo["eps"], 1e-5);
    assert_eq!(echo["direction"]["kind"], "random-smooth");
    assert_eq!(echo["fp_max_iters"], 200);
    let again = write_config(&dir, "echo.json", &serde_json::to_string(echo).unwrap());
    let c = dir.path().join("c");
    run(&again, &c, &[]);
    assert_eq!(
        fs::read(a.join("tangent-check.csv")).unwrap(),
        fs::read(c.join("tangent-check.csv")).unwrap()
    );
}

#[test]
fn stability_on_schrodinger_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "stab.json",
        r#"{"experiment": "stability", "problem": "nls-linear-periodic", "n": 256,
            "tableau": "gl:2", "h_list": [0.001, 0.01, 0.1, 1.0], "output": "stab"}"#,
    );
    let res = run(&cfg, dir.path(), &[]);
    assert!(res.status.success());
    let s = summary(dir.path(), "stab");
    let amp = s["result"]["max_amplification"].as_f64().unwrap();
    assert!((amp - 1.0).abs() <= 1e-13, "{amp}");
    let csv = fs::read_to_string(dir.path().join("stab.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn unknown_problem_lists_catalogue() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "bad.json",
        "{\n  \"experiment\": \"convergence\",\n  \"problem\": \"foo\",\n  \"T\": 1, \"h_list\": [0.1]\n}",
    );
    let res = run(&cfg, dir.path(), &[]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8(res.stderr).unwrap();
    assert!(err.contains("bad.json:3"), "{err}");
    assert!(err.contains("`problem`"), "{err}");
    for name in ["nls-cubic-periodic", "wave-cubic-periodic", "wave-neumann"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn parse_errors_report_line_and_key() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "typo.json",
        "{\n  \"experiment\": \"stability\",\n  \"h_list\": [0.1],\n  \"fp_tol\": \"small\"\n}",
    );
    let res = run(&cfg, dir.path(), &[]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8(res.stderr).unwrap();
    assert!(err.contains("typo.json:4"), "{err}");
    assert!(err.contains("`fp_tol`"), "{err}");

    let cfg = write_config(&dir, "exp.json", r#"{"experiment": "sweep"}"#);
    let err = String::from_utf8(run(&cfg, dir.path(), &[]).stderr).unwrap();
    assert!(err.contains("dirichlet-compat") && err.contains("tangent-check"), "{err}");
}

#[test]
fn acceptance_miss_exits_nonzero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "smooth.json",
        r#"{"experiment": "smoothness", "problem": "nls-linear-periodic", "n": 32,
            "h_max": 0.1, "levels": 4, "fp_tol": 1e-14, "expect_bounded": false}"#,
    );
    let res = run(&cfg, dir.path(), &[]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8(res.stdout).unwrap().starts_with("FAIL"));
    let s = summary(dir.path(), "smoothness");
    assert_eq!(s["pass"], Value::Bool(false));
    assert!(s["result"]["probe"]["norms"].as_array().unwrap().len() == 4);
}

#[test]
fn custom_tableau_and_debug_checks() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("euler.json"),
        r#"{"s": 1, "a": [[1.0]], "b": [1.0], "c": [1.0], "p": 1}"#,
    )
    .unwrap();
    let cfg = write_config(
        &dir,
        "cons.json",
        r#"{"experiment": "conservation", "problem": "nls-cubic-periodic", "n": 16,
            "tableau": "euler.json", "h_list": [0.01], "steps": 50}"#,
    );
    let out = dir.path().join("out");
    let res = run(&cfg, &out, &["--debug-checks"]);
    // implicit Euler is dissipative: mass drifts and the run fails its check
    assert_eq!(res.status.code(), Some(1), "{}", String::from_utf8_lossy(&res.stderr));
    let s = summary(&out, "conservation");
    assert_eq!(s["config"]["debug_checks"], Value::Bool(true));
    assert_eq!(s["tableau"]["order"], 1);
    assert!(s["result"]["relative_mass_drift"].as_f64().unwrap() > 1e-9);
    let csv = fs::read_to_string(out.join("conservation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 52);
}

#[test]
fn dirichlet_comparison_writes_both_tables() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "dir.json",
        r#"{"experiment": "dirichlet-compat", "n": 64, "T": 0.2, "h_list": [0.05, 0.025, 0.0125],
            "fp_tol": 1e-13}"#,
    );
    let res = run(&cfg, dir.path(), &[]);
    assert!(res.status.code().is_some());
    for f in ["dirichlet-compat-compatible.csv", "dirichlet-compat-incompatible.csv"] {
        assert_eq!(fs::read_to_string(dir.path().join(f)).unwrap().lines().count(), 4);
    }
    let s = summary(dir.path(), "dirichlet-compat");
    assert!(s["config"].get("problem").is_none());
    assert!(s["result"]["incompatible"]["fitted_order"].as_f64().unwrap() < 2.0);

    let cfg = write_config(
        &dir,
        "dir2.json",
        r#"{"experiment": "dirichlet-compat", "problem": "wave-neumann", "T": 0.2, "h_list": [0.05]}"#,
    );
    assert_eq!(run(&cfg, dir.path(), &[]).status.code(), Some(2));
}
