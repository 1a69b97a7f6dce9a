use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn lgr_ocp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lgr-ocp")).args(args).output().expect("binary runs")
}

fn solve(problem: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["solve", "--problem", problem, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    lgr_ocp(&args)
}

fn problem_file(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "problems", name].iter().collect();
    format!("file:{}", path.display())
}

fn read_report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn history_rows(dir: &Path) -> Vec<(usize, f64)> {
    let mut rdr = csv::Reader::from_path(dir.join("history.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["iteration", "tau"]);
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            assert_eq!(r.len(), 2);
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn robot_arm_defaults_converge() {
    let dir = TempDir::new().unwrap();
    let out = solve("robot_arm", dir.path(), &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let report = read_report(dir.path());
    assert_eq!(report["status"], "converged");
    let fin = &report["final"];
    assert!((fin["objective"].as_f64().unwrap() - 9.140963).abs() <= 5e-4);
    assert!(fin["e_max"].as_f64().unwrap() <= 1e-6);
    let k = fin["intervals"].as_u64().unwrap() as usize;
    assert!((6..=13).contains(&k), "K = {k}");

    // iteration records increase and the last one meets the tolerance
    let iters = report["iterations"].as_array().unwrap();
    let ms: Vec<u64> = iters.iter().map(|r| r["iteration"].as_u64().unwrap()).collect();
    assert!(ms.windows(2).all(|w| w[1] == w[0] + 1));
    assert!(iters.last().unwrap()["e_max"].as_f64().unwrap() <= 1e-6);

    let sol = &report["solution"];
    assert_eq!(sol["tau"].as_array().unwrap().len(), 1000);
    assert_eq!(sol["states"].as_array().unwrap().len(), 1000);
    assert_eq!(sol["states"][0].as_array().unwrap().len(), 6);
    assert_eq!(sol["controls"][0].as_array().unwrap().len(), 3);
    let overlays = report["overlays"].as_array().unwrap();
    assert_eq!(overlays.len(), k);
    let fwd = &overlays[0]["forward"];
    assert_eq!(fwd["status"], "ok");
    assert_eq!(fwd["tau"].as_array().unwrap().len(), fwd["simulated"].as_array().unwrap().len());
    assert_eq!(fwd["tau"].as_array().unwrap().len(), fwd["collocated"].as_array().unwrap().len());

    // mesh history: 11 points on the first mesh, K + 1 on the last
    let rows = history_rows(dir.path());
    let last = *ms.last().unwrap() as usize;
    assert_eq!(rows.iter().filter(|r| r.0 == 0).count(), 11);
    assert_eq!(rows.iter().filter(|r| r.0 == last).count(), k + 1);

    let meshes: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("meshes.json")).unwrap()).unwrap();
    let meshes = meshes.as_array().unwrap();
    assert_eq!(meshes.len(), iters.len());
    for m in meshes {
        assert_eq!(m["mesh_points"].as_array().unwrap().len(), m["counts"].as_array().unwrap().len() + 1);
    }
}

#[test]
fn hyper_sensitive_reports_skipped_backward_direction() {
    let dir = TempDir::new().unwrap();
    let out = solve("hyper_sensitive", dir.path(), &["--format", "json"]);
    assert_eq!(code(&out), 0);
    let report = read_report(dir.path());
    assert!((report["final"]["objective"].as_f64().unwrap() - 1.330806).abs() <= 1e-3);
    let skipped = report["skipped"].as_array().unwrap();
    assert!(skipped.iter().any(|s| s["reason"] == "tvp_failed" && s["direction"] == "backward"));
    assert_eq!(report["direction_policy"], "forward_only");
    assert!(!dir.path().join("history.csv").exists());
}

#[test]
fn reports_are_byte_stable() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        assert_eq!(code(&solve("hyper_sensitive", d.path(), &[])), 0);
    }
    for f in ["report.json", "history.csv", "meshes.json"] {
        // the config echo names the output directory; compare the rest
        let strip = |p: &Path| {
            let v = std::fs::read_to_string(p.join(f)).unwrap();
            v.replace(p.to_str().unwrap(), "<out>")
        };
        assert_eq!(strip(a.path()), strip(b.path()), "{f} differs");
    }
}

#[test]
fn rejected_config_writes_nothing() {
    let root = TempDir::new().unwrap();
    let dir = root.path().join("out");
    let out = solve("robot_arm", &dir, &["--nmin", "5", "--nmax", "3"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_max"));
    assert!(!dir.exists());

    let out = solve("no_such_problem", &dir, &[]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown problem"));
    assert!(!dir.exists());

    let out = solve("robot_arm", &dir, &["--format", "xml"]);
    assert_eq!(code(&out), 1);
    assert!(!dir.exists());
}

#[test]
fn unwritable_output_fails_before_solving() {
    let root = TempDir::new().unwrap();
    let blocker = root.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let out = solve("robot_arm", &blocker.join("sub"), &[]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("output directory"));
    assert!(String::from_utf8_lossy(&out.stdout).is_empty());
}

#[test]
fn empty_format_writes_no_files() {
    let root = TempDir::new().unwrap();
    let dir = root.path().join("out");
    let out = solve("hyper_sensitive", &dir, &["--format", ""]);
    assert_eq!(code(&out), 0);
    assert!(!dir.exists());
}

#[test]
fn iteration_budget_exhaustion_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let out = solve("robot_arm", dir.path(), &["--max-iters", "1"]);
    assert_eq!(code(&out), 2);
    let report = read_report(dir.path());
    assert_eq!(report["status"], "max_iterations");
    assert_eq!(report["iterations"].as_array().unwrap().len(), 2);
}

#[test]
fn infeasible_problem_exits_with_one() {
    let root = TempDir::new().unwrap();
    let file = root.path().join("stuck.toml");
    std::fs::write(
        &file,
        "states = [\"x\"]\ncontrols = [\"u\"]\ndynamics = [\"u\"]\nlagrange = \"u^2\"\n\
         [time]\ntf = 1.0\n[initial]\nx = 0.0\n[final]\nx = 1.0\n[control_bounds]\nu = [0.0, 0.5]\n",
    )
    .unwrap();
    let dir = root.path().join("out");
    let out = solve(&format!("file:{}", file.display()), &dir, &[]);
    assert_eq!(code(&out), 1);
    assert_eq!(read_report(&dir)["status"], "solver_failure");
}

#[test]
fn problem_files_solve() {
    let dir = TempDir::new().unwrap();
    let out = solve(&problem_file("double_integrator.toml"), dir.path(), &[]);
    assert_eq!(code(&out), 0);
    let report = read_report(dir.path());
    assert_eq!(report["problem"]["name"], "double_integrator");
    // u = 6 - 12 t, cost 6
    assert!((report["final"]["objective"].as_f64().unwrap() - 6.0).abs() <= 1e-8);
    let sol = &report["solution"];
    for i in [0, 333, 999] {
        let t = sol["t"][i].as_f64().unwrap();
        let u = sol["controls"][i][0].as_f64().unwrap();
        assert!((u - (6.0 - 12.0 * t)).abs() <= 1e-6, "u({t}) = {u}");
    }

    let dir = TempDir::new().unwrap();
    let out = solve(&problem_file("brachistochrone.toml"), dir.path(), &["--format", "json"]);
    assert_eq!(code(&out), 0);
    // cycloid through (2, 2) under g = 9.81
    let tf = read_report(dir.path())["final"]["tf"].as_f64().unwrap();
    assert!((tf - 0.824_338_669).abs() <= 1e-6, "tf = {tf}");
}

#[test]
fn broken_problem_file_is_a_config_error() {
    let root = TempDir::new().unwrap();
    let file = root.path().join("bad.toml");
    std::fs::write(&file, "states = [\"x\"]\ndynamics = [\"x +\"]\nlagrange = \"x\"\n").unwrap();
    let dir = root.path().join("out");
    let out = solve(&format!("file:{}", file.display()), &dir, &[]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dynamics of `x`") && err.contains("unexpected end"), "{err}");
    assert!(!dir.exists());
}

#[test]
fn climb_scaffold_runs() {
    let dir = TempDir::new().unwrap();
    let out = solve("supersonic_climb", dir.path(), &["--max-iters", "0", "--format", "json"]);
    assert_eq!(code(&out), 2);
    let tf = read_report(dir.path())["final"]["tf"].as_f64().unwrap();
    assert!(tf.is_finite() && tf > 1.0);
}
