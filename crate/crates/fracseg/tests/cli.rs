//! End-to-end runs of the binary: exit codes, artifacts and reproducibility.

use std::fs;
use std::path::Path;
use std::process::Command;

fn run(dir: &Path, config: &str, args: &[&str]) -> (i32, String) {
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fracseg"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

const SMALL: &str = "s = 0.5\n[grid]\nt_min = -4\nt_max = 6\nn_t = 80\nn_theta = 16\n";

#[test]
fn spectrum_first_row_is_the_leading_eigenvalue() {
    let d = tempfile::tempdir().unwrap();
    let (code, err) = run(d.path(), "s = 0.75\n", &["--mode", "spectrum"]);
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(d.path().join("out/eigen.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "j,lambda,theta,psi");
    let lambda: f64 = lines.next().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((lambda - 0.1875).abs() < 1e-6, "{lambda}");
}

#[test]
fn invalid_order_exits_2_without_output() {
    let d = tempfile::tempdir().unwrap();
    let (code, _) = run(d.path(), "s = 1.2\n", &["--mode", "spectrum"]);
    assert_eq!(code, 2);
    assert!(!d.path().join("out").exists());
    let (code, _) = run(d.path(), "[grid]\nwidth = 3\n", &[]);
    assert_eq!(code, 2);
    let (code, _) = run(d.path(), SMALL, &["--resolution", "huge"]);
    assert_eq!(code, 2);
    assert!(!d.path().join("out").exists());
}

#[test]
fn numerical_failure_exits_3_with_diagnostic() {
    let d = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}[solver]\nmax_iter = 1\ntolerance = 1e-14\nschedule = none\n");
    let (code, _) = run(d.path(), &cfg, &["--mode", "profile"]);
    assert_eq!(code, 3);
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("out/diagnostic.json")).unwrap()).unwrap();
    assert_eq!(diag["status"], "numerical-failure");
    assert!(!diag["history"].as_array().unwrap().is_empty());
    assert!(!d.path().join("out/summary.json").exists());
}

#[test]
fn modes_write_their_artifacts_and_record_defaults() {
    let cases: [(&str, &[&str]); 4] = [
        ("profile", &["u.csv", "v.csv", "solve_report.json"]),
        ("monotonicity", &["frequency.csv", "monotonicity.json"]),
        ("asymptotics", &["expansion.json"]),
        ("kernels", &["phi.csv", "kernel.csv", "kernels.json"]),
    ];
    for (mode, files) in cases {
        let d = tempfile::tempdir().unwrap();
        let (code, err) = run(d.path(), SMALL, &["--mode", mode]);
        assert_eq!(code, 0, "{mode}: {err}");
        for f in files {
            assert!(d.path().join("out").join(f).exists(), "{mode}: {f}");
        }
        let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("out/summary.json")).unwrap()).unwrap();
        assert_eq!(summary["mode"], mode);
        assert_eq!(summary["config"]["solver.damping"], 1.0);
        assert_eq!(summary["config"]["kernels.samples"], 200);
    }
}

#[test]
fn identical_inputs_give_identical_bytes() {
    let d = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}[solver]\ninitial_guess = perturbed\n");
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let (code, err) = run(d.path(), &cfg, &["--mode", "monotonicity", "--seed", "7"]);
        assert_eq!(code, 0, "{err}");
        let mut files: Vec<_> = fs::read_dir(d.path().join("out")).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        snapshots.push(files.iter().map(|f| fs::read(f).unwrap()).collect::<Vec<_>>());
        fs::remove_dir_all(d.path().join("out")).unwrap();
    }
    assert_eq!(snapshots[0], snapshots[1]);
}
