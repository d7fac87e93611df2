use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dyadic-bloom"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn verify_passing_suite_exits_zero() {
    let out = run(&["verify", "--depth", "5", "--trials", "3", "--suite", "identities", "--suite", "carleson"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("identities: pass (3 trials)"));
}

#[test]
fn hard_assertion_failure_exits_one() {
    // trial 0 of the default ensemble breaks the constant-1 lower bound at depth 4
    let out = run(&["verify", "--depth", "4", "--seed", "0", "--suite", "paraproduct-bounds"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("paraproduct-bounds: FAIL"));
}

#[test]
fn usage_and_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"trials": 0}"#).unwrap();
    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"{"depht": 4}"#).unwrap();
    for args in [
        vec!["verify", "--config", bad.to_str().unwrap()],
        vec!["verify", "--config", unknown.to_str().unwrap()],
        vec!["verify", "--suite", "nonsense"],
        vec!["verify", "--depth", "40"],
        vec!["sweep", "beta", "0:1:2"],
        vec!["sweep", "alpha", "1:2"],
        vec!["frobnicate"],
        vec!["norms", "missing-mu.json", "missing-lambda.json", "missing-b.json"],
    ] {
        let out = run(&args);
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn gen_then_norms() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(&["gen", "--depth", "4", "--seed", "3", "--out", d.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let report = d.join("report.json");
    let files = ["mu.json", "lambda.json", "symbol.json"].map(|f| d.join(f).to_str().unwrap().to_string());
    let out = run(&["norms", &files[0], &files[1], &files[2], "--out", report.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["depth"], 4);
    assert_eq!(json["method"], "dense");
    assert!(json["commutator"].as_f64().unwrap() > 0.0);
    assert!(json["a2_mu"].as_f64().unwrap() >= 1.0);
}

#[test]
fn norms_of_lebesgue_root_haar() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p.to_str().unwrap().to_string()
    };
    let one = write("one.json", r#"{"depth": 2, "values": [1, 1, 1, 1]}"#);
    let h = write("h.json", r#"{"depth": 2, "values": [-1, -1, 1, 1]}"#);
    let out = run(&["norms", &one, &one, &h]);
    assert_eq!(code(&out), 0);
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    for key in ["paraproduct", "shift_mu"] {
        assert!((json[key].as_f64().unwrap() - 1.0).abs() < 1e-12, "{key}");
    }
    assert!((json["functionals"]["bmo_rho"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let bad = write("neg.json", r#"{"depth": 2, "values": [1, -1, 1, 1]}"#);
    assert_eq!(code(&run(&["norms", &bad, &one, &h])), 2);
}

fn verify_json(dir: &Path, name: &str) -> String {
    let path = dir.join(name);
    let out = run(&["verify", "--depth", "4", "--trials", "3", "--seed", "9", "--suite", "stopping", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    fs::read_to_string(path).unwrap()
}

#[test]
fn verify_is_deterministic_and_reportable() {
    let dir = tempfile::tempdir().unwrap();
    let a = verify_json(dir.path(), "a.json");
    assert_eq!(a, verify_json(dir.path(), "b.json"));
    let out = run(&["report", dir.path().join("a.json").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.lines().next().unwrap().starts_with("suite,"), "{text}");
    assert!(text.contains("stopping"));
}

#[test]
fn single_point_sweep() {
    let out = run(&["sweep", "alpha", "0:0:1", "--depth", "4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("alpha,depth,seed,a2_mu"));
    assert!(rows[1].starts_with("0,4,"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"depth": 6, "trials": 2, "suites": ["identities"], "mu": {"kind": "power", "alpha": 0.3}, "symbol": {"kind": "haar-sparse-symbol", "sparsity": 0.5}}"#,
    )
    .unwrap();
    let out = run(&["verify", "--config", cfg.to_str().unwrap(), "--depth", "4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("identities: pass (2 trials)"));
}
