use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn viscolab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viscolab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn problem(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const LINEAR: &str = "m = 1\nb = 1\nc = 2\nf = sin(x1)\nn = 128\neps = 0.4, 0.1\n";

#[test]
fn check_reports_constants_and_passes_the_gate() {
    let tmp = TempDir::new().unwrap();
    let p = problem(tmp.path(), "p.txt", LINEAR);
    let out = tmp.path().join("out");
    let o = viscolab(&["check", "--problem", &p, "--out", out.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let c = json(&out.join("constants.json"));
    assert_eq!(c["b0"].as_f64(), Some(0.0));
    assert_eq!(c["c0"].as_f64(), Some(2.0));
    assert_eq!(c["eps_bar"], "unbounded");
    assert_eq!(c["lip_bound_linear_0"].as_f64(), Some(0.5));
    let verdict = fs::read_to_string(out.join("verdict.txt")).unwrap();
    assert!(verdict.contains("verdict: PASS"));
}

#[test]
fn failing_gate_exits_one() {
    let tmp = TempDir::new().unwrap();
    // b0 = 2 exceeds c0 = 1
    let p = problem(tmp.path(), "p.txt", "m = 1\nb = sin(2*x1)\nc = 1\nf = 1\n");
    let out = tmp.path().join("out");
    let o = viscolab(&["check", "--problem", &p, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let c = json(&out.join("constants.json"));
    assert_eq!(c["cond1"], false);
    assert_eq!(c["eps_bar"], "undefined");
}

#[test]
fn configuration_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let bad_key = problem(
        tmp.path(),
        "a.txt",
        "m = 1\nb = 1\nc = 2\nf = 1\nspeed = 3\n",
    );
    let o = viscolab(&["check", "--problem", &bad_key, "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 5"));

    let ladder = problem(tmp.path(), "b.txt", LINEAR);
    let o = viscolab(&[
        "solve-linear",
        "--problem",
        &ladder,
        "--out",
        out,
        "--eps",
        "0.1,0.2",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = viscolab(&["check", "--problem", &ladder]);
    assert_eq!(o.status.code(), Some(2), "missing --out");
    let o = viscolab(&["experiment", "nope", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    let o = viscolab(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));

    let nonlinear = problem(tmp.path(), "c.txt", "m = 1\nb = 1 + lam\nc = 5\nf = 1\n");
    let o = viscolab(&["solve-linear", "--problem", &nonlinear, "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn module_errors_exit_one_with_a_report() {
    let tmp = TempDir::new().unwrap();
    let p = problem(
        tmp.path(),
        "p.txt",
        "m = 1\nb = 1\nc = sin(x1)\nf = 1\nn = 16\n",
    );
    let out = tmp.path().join("out");
    let o = viscolab(&[
        "characteristics",
        "--problem",
        &p,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let e = json(&out.join("error.json"));
    assert_eq!(e["error"], "module");
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn solve_linear_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let p = problem(tmp.path(), "p.txt", LINEAR);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = viscolab(&[
            "solve-linear",
            "--problem",
            &p,
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stdout)
        );
    }
    let (fa, fb) = (read_dir_sorted(&a), read_dir_sorted(&b));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "parameters.json",
            "solution.csv",
            "solve.csv",
            "verdict.txt"
        ]
    );
    assert_eq!(fa, fb);
}

#[test]
fn sweep_and_characteristics_agree() {
    let tmp = TempDir::new().unwrap();
    let p = problem(
        tmp.path(),
        "p.txt",
        "m = 1\nb = 1\nc = 2\nf = sin(x1)\nn = 256\neps = 0.2, 0.05, 0.0125\n",
    );
    let out = tmp.path().join("sweep");
    let o = viscolab(&["sweep", "--problem", &p, "--out", out.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let errors: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]));

    let out = tmp.path().join("chars");
    let o = viscolab(&[
        "characteristics",
        "--problem",
        &p,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("characteristics.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let exact = (2.0 * v[0].sin() - v[0].cos()) / 5.0;
        assert!((v[1] - exact).abs() < 1e-7);
    }
}

#[test]
fn solve_nonlinear_writes_limit_and_trace() {
    let tmp = TempDir::new().unwrap();
    let p = problem(
        tmp.path(),
        "p.txt",
        "m = 1\nb = 1 + 0.1*lam\nc = 4 + 0.1*lam*cos(x1)\nf = 1 + 0.5*sin(x1)\nn = 128\neps = 0.2, 0.05\n",
    );
    let out = tmp.path().join("out");
    let o = viscolab(&[
        "solve-nonlinear",
        "--problem",
        &p,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    for f in [
        "cauchy.csv",
        "limit.csv",
        "trace.csv",
        "verdict.txt",
        "parameters.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("k,w_norm,ratio,rho_star\n"));
}

#[test]
fn experiment_command_accepts_overrides() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("blowup");
    let o = viscolab(&[
        "experiment",
        "blowup",
        "--out",
        out.to_str().unwrap(),
        "--n",
        "128",
        "--eps",
        "0.2,0.1,0.05",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let params = json(&out.join("parameters.json"));
    assert_eq!(params["experiment"], "blowup");
    assert_eq!(params["n"], 128);
    let growth = fs::read_to_string(out.join("growth.csv")).unwrap();
    assert_eq!(growth.lines().count(), 4);
}
