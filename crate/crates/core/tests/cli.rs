use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sde_drift::cli::load_model;
use sde_drift::eval::relative_l2_error;
use sde_drift::systems::{SystemSpec, Trajectory};

fn sde_drift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sde-drift"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.display().to_string()
}

#[test]
fn simulate_writes_the_documented_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = sde_drift(&[
            "simulate",
            "--system",
            "hopf",
            "--noise",
            "0.1",
            "--n",
            "10000",
            "--dt",
            "0.01",
            "--seed",
            "7",
            "--out",
            &out_arg(d),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let text = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert_eq!(text, fs::read_to_string(b.join("trajectory.csv")).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x0,x1"));
    assert_eq!(lines.clone().count(), 10000);
    assert!(lines.all(|l| l.split(',').count() == 3));
    let (traj, meta) = Trajectory::read(&a.join("trajectory.csv")).unwrap();
    assert_eq!(traj.len(), 10000);
    assert_eq!(meta.unwrap().seed, 7);
}

#[test]
fn zero_noise_orbit_ignores_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for seed in ["1", "2"] {
        let d = dir.path().join(seed);
        let out = sde_drift(&[
            "simulate",
            "--system",
            "lorenz63",
            "--noise",
            "0",
            "--n",
            "500",
            "--seed",
            seed,
            "--out",
            &out_arg(&d),
        ]);
        assert!(out.status.success());
        files.push(fs::read(d.join("trajectory.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn estimate_run_round_trips_through_its_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = sde_drift(&[
        "estimate",
        "--system",
        "hopf",
        "--noise",
        "0.1",
        "--n",
        "3000",
        "--centers",
        "200",
        "--seed",
        "3",
        "--out",
        &out_arg(&run),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "config.txt",
        "trajectory.csv",
        "trajectory.meta.json",
        "test_trajectory.csv",
        "model.json",
        "report.json",
        "pointwise.csv",
        "orbits.csv",
    ] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    let reported = report["error"]["relative_l2"].as_f64().unwrap();

    let model = load_model(&run.join("model.json")).unwrap();
    let (test, meta) = Trajectory::read(&run.join("test_trajectory.csv")).unwrap();
    let spec: SystemSpec = meta.unwrap().spec;
    let recomputed = relative_l2_error(&model, &spec, test.points())
        .unwrap()
        .relative_l2;
    assert!(
        (recomputed - reported).abs() < 1e-12,
        "{recomputed} vs {reported}"
    );

    // The echoed config reproduces the run.
    let again = dir.path().join("again");
    let out = sde_drift(&[
        "estimate",
        "--config",
        &run.join("config.txt").display().to_string(),
        "--out",
        &out_arg(&again),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        fs::read(run.join("report.json")).unwrap(),
        fs::read(again.join("report.json")).unwrap()
    );

    // Estimating from the written trajectory file gives the same report.
    let from_file = dir.path().join("from_file");
    let out = sde_drift(&[
        "estimate",
        "--system",
        "hopf",
        "--centers",
        "200",
        "--trajectory",
        &run.join("trajectory.csv").display().to_string(),
        "--out",
        &out_arg(&from_file),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        fs::read(run.join("report.json")).unwrap(),
        fs::read(from_file.join("report.json")).unwrap()
    );

    // Orbit comparison from the saved model.
    let cmp = dir.path().join("cmp");
    let out = sde_drift(&[
        "compare",
        "--system",
        "hopf",
        "--model",
        &run.join("model.json").display().to_string(),
        "--x0",
        "1,0",
        "--horizon",
        "10",
        "--out",
        &out_arg(&cmp),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let orbits = fs::read_to_string(cmp.join("orbits.csv")).unwrap();
    let rows: Vec<&str> = orbits.lines().skip(1).collect();
    assert_eq!(rows.len(), 1001);
    let flagged = rows.iter().filter(|r| r.ends_with(",1")).count();
    assert!(flagged * 10 < rows.len(), "{flagged} flagged rows");
}

#[test]
fn sparse_without_stencil_is_a_usage_error() {
    let out = sde_drift(&[
        "estimate",
        "--system",
        "hopf",
        "--estimator",
        "sparse",
        "--n",
        "100",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stencil"));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(
        sde_drift(&["simulate", "--system", "pendulum"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        sde_drift(&["simulate", "--system", "hopf", "--n", "many"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(sde_drift(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(sde_drift(&["--help"]).status.code(), Some(0));
}

#[test]
fn blow_up_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = sde_drift(&[
        "simulate",
        "--system",
        "lorenz63",
        "--noise",
        "0.1",
        "--dt",
        "0.5",
        "--substeps",
        "1",
        "--n",
        "200",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_rejects_a_model_of_another_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = sde_drift(&[
        "estimate",
        "--system",
        "hopf",
        "--n",
        "600",
        "--centers",
        "50",
        "--out",
        &out_arg(&run),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = sde_drift(&[
        "compare",
        "--system",
        "lorenz63",
        "--model",
        &run.join("model.json").display().to_string(),
        "--out",
        &out_arg(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_writes_one_directory_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = sde_drift(&[
        "sweep",
        "--system",
        "lorenz96",
        "--noise",
        "0.05,0.1",
        "--n",
        "400",
        "--centers",
        "100",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary
        .lines()
        .skip(1)
        .all(|l| l.starts_with("lorenz96,") && l.ends_with(",ok")));
    assert!(dir.path().join("lorenz96-0.05").join("model.json").exists());
    let model: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("lorenz96-0.1/model.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(model["estimator"], "sparse");
}
