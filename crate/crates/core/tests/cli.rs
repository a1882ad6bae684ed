use std::path::Path;
use std::process::{Command, Output};

use icedist::cli::{config_hash, RunManifest};

fn icedist(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icedist"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = icedist(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn failure(dir: &Path, args: &[&str]) -> String {
    let out = icedist(dir, args);
    assert_eq!(out.status.code(), Some(1), "{args:?} should fail");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn missing_input_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let err = failure(dir.path(), &["fit", "--data", "absent/data.csv", "--out", "fit"]);
    assert!(err.contains("absent/data.csv"), "{err}");
    let err = failure(dir.path(), &["ice", "--draws", "no_such_fit", "--out", "ice"]);
    assert!(err.contains("no_such_fit"), "{err}");
}

#[test]
fn bad_arguments_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let err = failure(dir.path(), &["simulate", "--preset", "fig3-gaussian", "--n", "0", "--out", "sim"]);
    assert!(err.contains("n must be >= 1"), "{err}");
    let err = failure(dir.path(), &["simulate", "--preset", "nonsense", "--n", "10", "--out", "sim"]);
    assert!(err.contains("unknown preset"), "{err}");
    let err = failure(dir.path(), &["simulate", "--n", "10", "--out", "sim"]);
    assert!(err.contains("--preset or --config"), "{err}");
    let err = failure(dir.path(), &["plot", "--out", "plot"]);
    assert!(err.contains("nothing to plot"), "{err}");
}

#[test]
fn fit_options_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--preset", "fig3-gaussian", "--n", "200", "--out", "sim"]);
    let err = failure(dir.path(), &["fit", "--data", "sim/data.csv", "--out", "fit", "--het", "l_1"]);
    assert!(err.contains("conf-het"), "{err}");
    let err = failure(dir.path(), &["fit", "--data", "sim/data.csv", "--out", "fit", "--z1", "some"]);
    assert!(err.contains("--z1"), "{err}");
    let err = failure(dir.path(), &["fit", "--data", "sim/data.csv", "--out", "fit", "--thin", "0"]);
    assert!(err.contains("thin 0"), "{err}");
    let err = failure(dir.path(), &["fit", "--data", "sim/data.csv", "--out", "fit", "--confounders", "age"]);
    assert!(err.contains("age"), "{err}");
}

#[test]
fn simulate_writes_data_truth_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--preset", "fig1-wide", "--n", "50", "--seed", "4", "--out", "sim"]);
    let sim = dir.path().join("sim");
    let data = std::fs::read_to_string(sim.join("data.csv")).unwrap();
    assert_eq!(data.lines().count(), 51);
    assert_eq!(data.lines().next().unwrap(), "y,a,l_1");
    let truth = std::fs::read_to_string(sim.join("truth.csv")).unwrap();
    assert_eq!(truth.lines().next().unwrap(), "u,y0,y1");

    let m = RunManifest::read(&sim).unwrap();
    assert_eq!(m.command, "simulate");
    assert_eq!(m.seed, Some(4));
    assert_eq!(m.config_hash, config_hash(&m.config));
    assert_eq!(m.config_hash.len(), 64);
    assert_eq!(m.outputs, ["data.csv", "truth.csv", "scm.json"]);

    // The written configuration reproduces the data.
    ok(dir.path(), &["simulate", "--config", "sim/scm.json", "--n", "50", "--seed", "4", "--out", "again"]);
    assert_eq!(data, std::fs::read_to_string(dir.path().join("again/data.csv")).unwrap());
}

#[test]
fn fit_and_summaries_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--preset", "fig3-gaussian", "--n", "300", "--seed", "2", "--out", "sim"]);
    ok(d, &["--threads", "1", "fit", "--data", "sim/data.csv", "--out", "fit", "--kind", "gaussian", "--burn", "200", "--iter", "1000", "--chains", "2"]);
    let m = RunManifest::read(d.join("fit")).unwrap();
    assert_eq!(m.outputs, ["draws.json", "chain_0.csv", "chain_1.csv", "z1.csv"]);
    assert_eq!(m.config["chains"]["n_chains"], 2);
    assert_eq!(m.config["model"]["kind"], "gaussian_lmm");

    ok(d, &["diagnose", "--draws", "fit", "--out", "diag", "--quantity", "ate,sigma"]);
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("diag/diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag.as_array().unwrap().len(), 2);
    assert_eq!(diag[1]["quantity"], "sigma");
    assert!(diag[0]["rhat"].as_f64().unwrap() < 1.1);

    ok(d, &["ice", "--draws", "fit", "--out", "ice", "--harm-direction", "negative"]);
    let ice: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("ice/ice.json")).unwrap()).unwrap();
    assert_eq!(ice["harm_direction"], "negative");
    let density = std::fs::read_to_string(d.join("ice/density.csv")).unwrap();
    assert_eq!(density.lines().count(), 513);

    let err = failure(d, &["diagnose", "--draws", "fit", "--out", "diag", "--quantity", "nonsense"]);
    assert!(err.contains("nonsense"), "{err}");
}

#[test]
fn coverage_smoke() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["coverage", "--preset", "fig3-gaussian", "--replicates", "2", "--n", "200", "--burn", "200", "--iter", "500", "--out", "cov"],
    );
    let csv = std::fs::read_to_string(dir.path().join("cov/coverage.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("quantity,truth,"));
    assert!(lines[1].starts_with("P(ICE>0),"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cov/coverage.json")).unwrap()).unwrap();
    assert_eq!(json["replicates"], 2);
    let err = failure(dir.path(), &["coverage", "--preset", "fig3-gaussian", "--replicates", "1", "--out", "c1"]);
    assert!(err.contains("2"), "{err}");
}

#[test]
fn variance_selection_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--preset", "fig1-wide", "--n", "3000", "--out", "sim"]);
    ok(d, &["variance", "--data", "sim/data.csv", "--out", "var", "--by", "l_1"]);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("var/variance.json")).unwrap()).unwrap();
    assert_eq!(v["strata"].as_array().unwrap().len(), 2);
    assert!(v["overall"]["test"]["flag"].as_bool().unwrap());

    ok(d, &["select-confounders", "--data", "sim/data.csv", "--out", "sel"]);
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("sel/selection.json")).unwrap()).unwrap();
    assert!(s["selected"].is_array());

    ok(d, &["plot", "--bounds", "50", "80", "--out", "plot"]);
    let svg = std::fs::read_to_string(d.join("plot/bounds.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(RunManifest::read(d.join("plot")).unwrap().outputs, ["bounds.svg"]);
}
