use std::path::Path;
use std::process::{Command, Output};

fn mamr(args: &[&str], env_level: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mamr"));
    cmd.args(args);
    match env_level {
        Some(level) => cmd.env("MAMR_LOG_LEVEL", level),
        None => cmd.env_remove("MAMR_LOG_LEVEL"),
    };
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

const SETTLED: &str = r#"
[[runs]]
name = "settled"
mode = "flc_only"
start = { x = 0.0, y = 0.0, theta = 0.0 }
target = { x = "free" }
"#;

const SHORT: &str = r#"
[sim]
duration_max = 0.4

[[runs]]
name = "short"
mode = "flc_only"
start = { x = 0.0, y = 0.63, theta = 0.0 }
target = { x = "free" }
"#;

#[test]
fn print_defaults_is_a_valid_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = mamr(&["print-defaults"], None);
    assert!(out.status.success());
    let file = write(dir.path(), "defaults.toml", &text(&out.stdout));
    let check = mamr(&["validate-config", "--scenario", &file], None);
    assert!(check.status.success(), "{}", text(&check.stderr));
    assert!(text(&check.stdout).contains("2 runs, 12 sweep cells"), "{}", text(&check.stdout));
}

#[test]
fn converged_runs_exit_zero_and_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "s.toml", SETTLED);
    let out_dir = dir.path().join("out");
    let out = mamr(&["run", "--scenario", &file, "--out", out_dir.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    for name in ["settled.csv", "settled.json", "summary.json"] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    assert!(text(&out.stdout).contains("settled"));
}

#[test]
fn nonconvergence_sets_the_exit_code_unless_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "s.toml", SHORT);
    let out_dir = dir.path().join("out");
    let out_dir = out_dir.to_str().unwrap();
    let out = mamr(&["run", "-s", &file, "-o", out_dir], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("1 of 1 runs did not converge"));
    let out = mamr(&["run", "-s", &file, "-o", out_dir, "--allow-nonconvergence"], None);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn empty_run_list_warns_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "empty.toml", "[sim]\nseed = 3\n");
    let out_dir = dir.path().join("out");
    let out = mamr(&["run", "--scenario", &file, "--out", out_dir.to_str().unwrap()], Some("warn"));
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stderr).contains("no runs"), "{}", text(&out.stderr));
    assert!(!out_dir.exists());
}

#[test]
fn malformed_file_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "bad.toml", "[controller]\ndrive_force = 5.0\ntol_yy = 0.1\n");
    let out = mamr(&["validate-config", "--scenario", &file], None);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("tol_yy") && err.contains("line 3"), "{err}");

    let file = write(dir.path(), "neg.toml", "[controller]\ntol_y = -1.0\n");
    let err = text(&mamr(&["validate-config", "--scenario", &file], None).stderr);
    assert!(err.contains("controller.tol_y"), "{err}");
}

#[test]
fn missing_file_is_an_error() {
    let out = mamr(&["validate-config", "--scenario", "/nonexistent/scenario.toml"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("/nonexistent/scenario.toml"));
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "s.toml", SHORT);
    let out_dir = dir.path().join("out");
    let out = mamr(
        &[
            "run",
            "-s",
            &file,
            "-o",
            out_dir.to_str().unwrap(),
            "--allow-nonconvergence",
            "--set",
            "sim.duration_max=0.1",
            "--seed",
            "9",
        ],
        None,
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let summary = std::fs::read_to_string(out_dir.join("short.json")).unwrap();
    // 0.1 s at 50 Hz: the initial sample plus five ticks
    assert!(summary.contains("\"ticks\": 6"), "{summary}");

    let bad = mamr(&["validate-config", "-s", &file, "--set", "controller.nope=1"], None);
    assert_eq!(bad.status.code(), Some(2));
    assert!(text(&bad.stderr).contains("nope"));
}

#[test]
fn sweep_writes_a_convergence_table() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(
        dir.path(),
        "sweep.toml",
        "[sim]\nduration_max = 0.2\n\n[sweep]\ny0 = [1.0]\ntheta0 = [0.0, 60.0]\ntarget = { x = 7.0 }\nmirror = true\n",
    );
    let out_dir = dir.path().join("out");
    let out = mamr(
        &["sweep", "-s", &file, "-o", out_dir.to_str().unwrap(), "--parallel", "2", "--allow-nonconvergence"],
        None,
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let table = std::fs::read_to_string(out_dir.join("convergence.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.starts_with("name,y0,theta0,mirrored,converged"));

    let no_sweep = write(dir.path(), "runs.toml", SETTLED);
    let out = mamr(&["sweep", "-s", &no_sweep, "-o", out_dir.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("[sweep]"));
}
