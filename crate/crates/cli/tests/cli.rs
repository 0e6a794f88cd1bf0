//! End-to-end tests of the `riccilab` binary: exit codes, artifact layout,
//! determinism, and the documented example behaviors.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riccilab"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Parses the trace CSV into (t, tr_min, tr_max, Option<z_min>) rows.
fn read_trace(path: &Path) -> Vec<(f64, f64, f64, Option<f64>)> {
    let text = fs::read_to_string(path).expect("trace exists");
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 4, "bad row {line:?}");
        let z = if cols[3].is_empty() {
            None
        } else {
            Some(cols[3].parse().unwrap())
        };
        rows.push((
            cols[0].parse().unwrap(),
            cols[1].parse().unwrap(),
            cols[2].parse().unwrap(),
            z,
        ));
    }
    rows
}

#[test]
fn verify_single_check_on_flat_passes_with_artifacts() {
    let dir = tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "verify",
            "--checks",
            "lemma_2_2",
            "--provider",
            "flat2",
            "--seed",
            "5",
            "--out",
            "out",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/verify_report.json")).unwrap())
            .unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["seed"], 5);
    assert_eq!(json["all_pass"], true);
    assert_eq!(json["reports"].as_array().unwrap().len(), 1);
    let report = &json["reports"][0];
    for key in ["id", "citation", "max_residual", "tolerance", "pass", "seed"] {
        assert!(report.get(key).is_some(), "report lacks {key}");
    }
    let csv = fs::read_to_string(dir.path().join("out/verify_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("lemma_2_2,flat2,"));
}

#[test]
fn negative_resolution_is_a_config_error_naming_the_field() {
    let dir = tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[grid]\nresolution = -4\n").unwrap();
    let out = run_in(dir.path(), &["verify", "--config", "bad.toml"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("grid.resolution"), "{}", stderr(&out));
}

#[test]
fn unknown_check_id_is_a_config_error() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["verify", "--checks", "lemma_9_9"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("checks"), "{}", stderr(&out));
}

#[test]
fn unknown_toml_key_is_a_config_error() {
    let dir = tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "bogus_knob = 1\n").unwrap();
    let out = run_in(dir.path(), &["flow", "--config", "bad.toml"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bogus_knob"), "{}", stderr(&out));
}

#[test]
fn mutated_run_fails_with_exit_one() {
    let dir = tempdir().unwrap();
    let args = [
        "verify",
        "--checks",
        "lemma_2_2",
        "--provider",
        "sphere2",
        "--seed",
        "5",
        "--out",
        "out",
    ];
    let clean = run_in(dir.path(), &args);
    assert_eq!(code(&clean), 0, "{}", stderr(&clean));
    let mut mutated_args = args.to_vec();
    mutated_args.extend(["--mutation", "drop-rc-dot-h"]);
    let mutated = run_in(dir.path(), &mutated_args);
    assert_eq!(code(&mutated), 1, "{}", stderr(&mutated));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/verify_report.json")).unwrap())
            .unwrap();
    assert_eq!(json["mutation"], "drop-rc-dot-h");
    assert_eq!(json["reports"][0]["pass"], false);
}

#[test]
fn same_config_and_seed_give_identical_reports() {
    let dir = tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        r#"
            seed = 7
            checks = ["theorem_C", "lemma_6_2_slopes"]
            provider = "sphere2"
            formats = ["json", "csv"]
        "#,
    )
    .unwrap();
    let a = run_in(dir.path(), &["verify", "--config", "run.toml", "--out", "a"]);
    let b = run_in(dir.path(), &["verify", "--config", "run.toml", "--out", "b"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(code(&b), 0, "{}", stderr(&b));
    let ja = fs::read(dir.path().join("a/verify_report.json")).unwrap();
    let jb = fs::read(dir.path().join("b/verify_report.json")).unwrap();
    assert_eq!(ja, jb, "reports differ between identical runs");
    let ca = fs::read(dir.path().join("a/verify_report.csv")).unwrap();
    let cb = fs::read(dir.path().join("b/verify_report.csv")).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn environment_variables_override_defaults() {
    let dir = tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_riccilab"))
        .args(["verify", "--checks", "lemma_2_2", "--provider", "flat2"])
        .env("RICCILAB_SEED", "9")
        .env("RICCILAB_OUT", "envout")
        .current_dir(dir.path())
        .output()
        .expect("binary runs");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("envout/verify_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(json["seed"], 9);
}

#[test]
fn sphere_flow_trace_is_strictly_increasing_and_closed_form() {
    let dir = tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        r#"
            seed = 3
            out_dir = "out"
            [flow]
            provider = "sphere2"
            t_max = 0.1
            steps = 5
        "#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["flow", "--config", "run.toml"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = read_trace(&dir.path().join("out/flow_trace.csv"));
    assert_eq!(rows.len(), 5);
    let mut prev = f64::NEG_INFINITY;
    for (t, tr_min, tr_max, z) in rows {
        let closed = 2.0 * t / (1.0 - 2.0 * t);
        assert!((tr_min - closed).abs() < 1e-10, "tR({t}) = {tr_min} != {closed}");
        assert!((tr_max - closed).abs() < 1e-10);
        assert!(tr_min > prev, "trace not strictly increasing at t = {t}");
        prev = tr_min;
        assert!(z.expect("analytic rows carry Z") > -1e-9);
    }
}

#[test]
fn flat_flow_trace_is_identically_zero() {
    let dir = tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "[flow]\nprovider = \"flat2\"\nt_max = 0.2\nsteps = 4\n",
    )
    .unwrap();
    let out = run_in(dir.path(), &["flow", "--config", "run.toml", "--out", "out"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for (t, tr_min, tr_max, _) in read_trace(&dir.path().join("out/flow_trace.csv")) {
        assert!(tr_min.abs() < 1e-12 && tr_max.abs() < 1e-12, "tR({t}) != 0");
    }
}

#[test]
fn grid_flow_writes_readable_snapshots_and_interior_z() {
    let dir = tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        r#"
            seed = 11
            out_dir = "out"
            [flow]
            provider = "grid"
            t_max = 0.03
            resolution = 16
            order = 4
        "#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["flow", "--config", "run.toml"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = read_trace(&dir.path().join("out/flow_trace.csv"));
    assert!(rows.len() >= 3, "expected several CFL steps, got {}", rows.len());
    assert_eq!(rows[0].0, 0.0);
    assert!(rows.last().unwrap().0 >= 0.03, "horizon not reached");
    assert!(rows[0].3.is_none() && rows.last().unwrap().3.is_none());
    assert!(rows[1].3.is_some(), "interior slices carry Z");

    let snaps: Vec<_> = fs::read_dir(dir.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    assert_eq!(snaps.len(), rows.len(), "one snapshot per stored slice here");
    let state = riccilab::flow::read_snapshot(&snaps[0]).expect("snapshot reads back");
    assert_eq!(state.spec.nx, 16);
}

#[test]
fn convergence_emits_slopes_near_minus_one() {
    let dir = tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        r#"
            seed = 3
            out_dir = "out"
            [convergence]
            providers = ["sphere2"]
            n_grid = [1e2, 1e3, 1e4]
            samples = 1
        "#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["convergence", "--config", "run.toml"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("out/convergence_sphere2.json")).unwrap(),
    )
    .unwrap();
    let slope = json["slope_metric"].as_f64().expect("slope present");
    assert!((slope + 1.0).abs() < 0.1, "slope {slope}");
    let csv = fs::read_to_string(dir.path().join("out/convergence_sphere2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "header plus one row per N");
}

#[test]
fn verify_honors_configured_grid_resolution() {
    let dir = tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        r#"
            seed = 5
            checks = ["lemma_2_2"]
            provider = "grid32"
            out_dir = "out"
            [grid]
            resolution = 16
        "#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["verify", "--config", "run.toml"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/verify_report.json")).unwrap())
            .unwrap();
    assert_eq!(json["reports"][0]["provider"], "grid32");
    assert_eq!(json["reports"][0]["pass"], true);
}
