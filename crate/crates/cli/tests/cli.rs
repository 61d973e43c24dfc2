//! End-to-end tests driving the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use llg_cli::formats::read_snapshot;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_llg-cli")
}

fn run_cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(binary())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary launches")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const FIXED_POINT: &str = r#"
[domain]
lengths = [1.0, 1.0, 1.0]
resolution = [8, 8, 8]

[model]
flow = "llg"

[stepper]
scheme = "midpoint"

[run]
horizon = 0.05
"#;

/// A run with actual dynamics: a unit-length tilt profile driven by a
/// time-dependent current. The basis keeps 29 modes so the projection of
/// the tilt stays within the solver's modulus gate.
const DRIVEN: &str = r#"
[domain]
lengths = [1.0, 1.0, 1.0]
resolution = [8, 8, 8]

[galerkin]
modes = 29

[model]
flow = "llg"
alpha = 0.8
beta = 0.5
epsilon = 0.05
anisotropy = "uniaxial"

[model.current]
j = ["cos(2*pi*t)", "0.1", "sin(pi*x1)*0.3"]
sample_count = 16

[initial]
u1 = "sin(0.3*cos(pi*x1))"
u2 = "0"
u3 = "cos(0.3*cos(pi*x1))"

[stepper]
dt = 0.005

[run]
horizon = 0.03
seed = 11
"#;

#[test]
fn fixed_point_run_writes_passing_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "run.toml", FIXED_POINT);
    let out = run_cli(tmp.path(), &["run", "run.toml", "--output", "art", "--quiet"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let art = tmp.path().join("art");
    let ledger = fs::read_to_string(art.join("ledger.csv")).unwrap();
    let header = ledger.lines().next().unwrap();
    assert!(header.starts_with("t,l2_sq,grad_l2_sq,"), "{header}");
    assert_eq!(ledger.lines().count(), 1 + 1 + 10, "one header, initial row, ten steps");

    // The resolved config is persisted with defaults made explicit.
    let resolved = fs::read_to_string(art.join("config.toml")).unwrap();
    assert!(resolved.contains("modes = 8"), "{resolved}");
    assert!(resolved.contains("boundary = \"neumann\""), "{resolved}");

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(art.join("summary.json")).unwrap()).unwrap();
    let defects = summary["defects"].as_array().unwrap();
    assert_eq!(defects.len(), 4);
    for d in defects {
        assert!(d["pass"].as_bool().unwrap(), "{d}");
        assert!(d["measured"].as_f64().unwrap() < 1e-10, "fixed point should be exact: {d}");
    }

    // Snapshots at the default cadence of 10: the initial instant and the
    // final one. The data never leaves the fixed point.
    let mut f = fs::File::open(art.join("snap_000000.llgf")).unwrap();
    let first = read_snapshot(&mut f).unwrap();
    assert_eq!(first.time, 0.0);
    assert_eq!(first.resolution, vec![8, 8, 8]);
    assert_eq!(first.ncomp, 3);
    let mut f = fs::File::open(art.join("snap_000001.llgf")).unwrap();
    let last = read_snapshot(&mut f).unwrap();
    assert!((last.time - 0.05).abs() < 1e-12);
    for chunk in last.data.chunks_exact(3) {
        assert!(chunk[0].abs() < 1e-12 && chunk[1].abs() < 1e-12);
        assert!((chunk[2] - 1.0).abs() < 1e-12);
    }
    assert!(!art.join("snap_000002.llgf").exists());
    assert!(!art.join("error.json").exists());
}

#[test]
fn unknown_keys_are_usage_errors_with_positions() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "[domain]\nlengths = [1.0]\nresolution = [16]\nflux = 3\n\n[model]\nflow = \"heat\"\n\n[run]\nhorizon = 0.1\n";
    write(tmp.path(), "bad.toml", body);
    let out = run_cli(tmp.path(), &["run", "bad.toml"]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("domain.flux"), "{err}");
    assert!(err.contains(":4:1"), "{err}");
}

#[test]
fn demag_needs_a_three_axis_domain() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "[domain]\nlengths = [1.0, 1.0]\nresolution = [16, 16]\n\n[model]\nflow = \"llg\"\ndemag = true\n\n[run]\nhorizon = 0.1\n";
    write(tmp.path(), "flat.toml", body);
    let out = run_cli(tmp.path(), &["run", "flat.toml"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("demag requires dim=3"), "{}", stderr(&out));
}

#[test]
fn stiff_steps_warn_then_surface_as_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "[domain]\nlengths = [1.0]\nresolution = [16]\n\n[galerkin]\nmodes = 10\n\n[model]\nflow = \"heat\"\nepsilon = 1.0\n\n[initial]\nu1 = \"cos(pi*x1)\"\nu2 = \"sin(pi*x1)\"\nu3 = \"0\"\n\n[stepper]\ndt = 0.5\n\n[run]\nhorizon = 1.0\n";
    write(tmp.path(), "stiff.toml", body);
    let out = run_cli(tmp.path(), &["run", "stiff.toml", "--output", "art"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("stability probe"), "{err}");
    assert!(err.contains("step rejected"), "{err}");

    let record: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("art/error.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(record["kind"], "numerical");
    assert!(record["error"].as_str().unwrap().contains("dt too large"));
}

#[test]
fn identical_config_and_seed_reproduce_ledgers_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "run.toml", DRIVEN);
    for dir in ["a", "b"] {
        let out = run_cli(tmp.path(), &["run", "run.toml", "--output", dir, "--seed", "9", "--quiet"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let a = fs::read(tmp.path().join("a/ledger.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/ledger.csv")).unwrap();
    assert!(!a.is_empty() && a == b, "ledgers must match byte for byte");
    let sa = fs::read(tmp.path().join("a/summary.json")).unwrap();
    let sb = fs::read(tmp.path().join("b/summary.json")).unwrap();
    assert_eq!(sa, sb);
}

#[test]
fn unknown_check_suite_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_cli(tmp.path(), &["check", "BOGUS", "--quiet"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unknown check suite"), "{}", stderr(&out));
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_cli(tmp.path(), &[]);
    assert_eq!(code(&out), 2);
}

#[test]
fn sweep_with_one_entry_reports_no_distances() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "run.toml", DRIVEN);
    write(tmp.path(), "sched.toml", "[[entry]]\nmodes = 29\nepsilon = 0.05\n");
    let out = run_cli(
        tmp.path(),
        &["sweep", "run.toml", "--schedule", "sched.toml", "--output", "sw", "--quiet"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("sw/sweep.json")).unwrap())
            .unwrap();
    let entries = report["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 1);
    assert!(entries[0]["distance_to_previous"].is_null());
    assert!(entries[0]["volume_identity_defect"].as_f64().unwrap().is_finite());
    assert!(tmp.path().join("sw/entry_00/ledger.csv").exists());
}

#[test]
fn sweep_refines_toward_agreement() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "run.toml", DRIVEN);
    write(
        tmp.path(),
        "sched.toml",
        "[[entry]]\nmodes = 29\nepsilon = 0.1\n\n[[entry]]\nmodes = 29\nepsilon = 0.05\n\n[[entry]]\nmodes = 29\nepsilon = 0.025\n",
    );
    let out = run_cli(
        tmp.path(),
        &["sweep", "run.toml", "--schedule", "sched.toml", "--output", "sw", "--jobs", "3", "--quiet"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("sw/sweep.json")).unwrap())
            .unwrap();
    let entries = report["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    let d1 = entries[1]["distance_to_previous"].as_f64().unwrap();
    let d2 = entries[2]["distance_to_previous"].as_f64().unwrap();
    assert!(d2 < d1, "consecutive runs should approach each other: {d1} then {d2}");
    for i in 0..3 {
        assert!(tmp.path().join(format!("sw/entry_{i:02}/ledger.csv")).exists());
    }
}

#[test]
fn vtk_snapshots_are_emitted_when_requested() {
    let tmp = tempfile::tempdir().unwrap();
    let body = FIXED_POINT.replace("horizon = 0.05", "horizon = 0.01\nvtk = true");
    write(tmp.path(), "run.toml", &body);
    let out = run_cli(tmp.path(), &["run", "run.toml", "--output", "art", "--quiet"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let vtk = fs::read_to_string(tmp.path().join("art/snap_000000.vtk")).unwrap();
    assert!(vtk.contains("DATASET STRUCTURED_POINTS"), "{vtk}");
    assert!(vtk.contains("VECTORS magnetization double"), "{vtk}");
}

#[test]
fn demag_kernel_cache_round_trips_through_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "[domain]\nlengths = [1.0, 1.0, 1.0]\nresolution = [8, 8, 8]\n\n[model]\nflow = \"llg\"\ndemag = true\ndemag_cache = \"kernel.dmgk\"\n\n[stepper]\ndt = 0.005\n\n[run]\nhorizon = 0.01\n";
    write(tmp.path(), "run.toml", body);

    let build = run_cli(tmp.path(), &["demag-kernel", "run.toml", "--cache", "kernel.dmgk", "--quiet"]);
    assert_eq!(code(&build), 0, "{}", stderr(&build));
    assert!(tmp.path().join("kernel.dmgk").exists());

    let out = run_cli(tmp.path(), &["run", "run.toml", "--output", "art", "--quiet"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    // A cache built for a different grid is rejected up front.
    let other = body.replace("resolution = [8, 8, 8]", "resolution = [12, 12, 12]");
    write(tmp.path(), "other.toml", &other);
    let bad = run_cli(tmp.path(), &["run", "other.toml", "--output", "art2", "--quiet"]);
    assert_eq!(code(&bad), 2, "{}", stderr(&bad));
    assert!(stderr(&bad).contains("different grid"), "{}", stderr(&bad));
}
