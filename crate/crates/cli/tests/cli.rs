//! End-to-end checks of the binary: exit codes, file outputs, determinism
//! and config round-tripping.

use std::path::Path;
use std::process::{Command, Output};

fn hsps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsps-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn analytic_defaults_print_reference_point() {
    let out = hsps(&["analytic"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("R_H"), "{text}");
    assert!(text.contains("2.1"), "{text}");
    let out = hsps(&["analytic", "--json"]);
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((json["r_h_hz"].as_f64().unwrap() - 2.1e6).abs() < 1.0);
    assert_eq!(json["n_spectral"].as_u64().unwrap(), 8);
}

#[test]
fn zero_pump_zeroes_the_rates() {
    let out = hsps(&["analytic", "--json", "--n-mean", "0"]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["r_h_hz"].as_f64().unwrap(), 0.0);
    assert_eq!(json["s1_hz"].as_f64().unwrap(), 0.0);
    assert_eq!(json["g2_single_mode_theory"].as_f64().unwrap(), 0.0);
}

#[test]
fn malformed_config_exits_2_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.conf");
    std::fs::write(&path, "[laser]\nwavelength_nm = 1540\n").unwrap();
    let out = hsps(&["analytic", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("bad.conf:2"), "{err}");
    assert!(err.contains("wavelength_nm"), "{err}");

    // Invalid physics in a well-formed file is also a config error.
    std::fs::write(&path, "[losses]\ngamma = 1.7\n").unwrap();
    let out = hsps(&["analytic", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_3() {
    let out = hsps(&[
        "simulate",
        "--duration",
        "100us",
        "--out",
        "/dev/null/nested",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = hsps(&[
        "simulate",
        "--duration",
        "1ms",
        "--seed",
        "11",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(csv.starts_with("set_value,r_h_hz,r_h_err,p1,p1_err,g2,g2_err,n_mean,g2_theory"));
    assert_eq!(csv.lines().count(), 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"].as_u64().unwrap(), 11);
    assert!(manifest["version"].is_string());
    assert!(manifest["started_at"].as_f64().unwrap() > 0.0);
    assert!(manifest["finished_at"].as_f64().unwrap() >= manifest["started_at"].as_f64().unwrap());
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(outputs.iter().any(|o| o.as_str().unwrap().ends_with("results.csv")));
}

#[test]
fn identical_seeds_give_identical_outputs() {
    let run = |dir: &Path, threads: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_hsps-sim"));
        cmd.args([
            "simulate",
            "--duration",
            "2ms",
            "--seed",
            "7",
            "--out",
            dir.to_str().unwrap(),
        ]);
        if let Some(t) = threads {
            cmd.env("HSPS_SIM_THREADS", t);
        }
        let out = cmd.output().expect("binary runs");
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(dir.join("results.csv")).unwrap()
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let dir_c = tempfile::tempdir().unwrap();
    let a = run(dir_a.path(), None);
    // Worker count must not leak into results.
    assert_eq!(a, run(dir_b.path(), Some("1")));
    assert_eq!(a, run(dir_c.path(), Some("4")));
}

#[test]
fn single_mode_override_tracks_theory() {
    let dir = tempfile::tempdir().unwrap();
    let out = hsps(&[
        "simulate",
        "--modes",
        "single",
        "--duration",
        "500ms",
        "--seed",
        "41",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let (g2, g2_err, theory): (f64, f64, f64) = (
        row[5].parse().unwrap(),
        row[6].parse().unwrap(),
        row[8].parse().unwrap(),
    );
    assert!(
        (g2 - theory).abs() <= 3.0 * g2_err,
        "single-mode g2 {g2} vs theory {theory} (sigma {g2_err})"
    );
    let out = hsps(&["simulate", "--modes", "sideways"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn manifest_config_text_reproduces_the_run() {
    // The resolved snapshot embedded in the manifest is a complete config:
    // feeding it back produces byte-identical results.
    let dir = tempfile::tempdir().unwrap();
    let out = hsps(&[
        "simulate",
        "--duration",
        "1ms",
        "--seed",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    let config_text = manifest["config"]["config_text"].as_str().unwrap();
    let cfg_path = dir.path().join("replay.conf");
    std::fs::write(&cfg_path, config_text).unwrap();
    let replay_dir = tempfile::tempdir().unwrap();
    let out = hsps(&[
        "simulate",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        replay_dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        std::fs::read(dir.path().join("results.csv")).unwrap(),
        std::fs::read(replay_dir.path().join("results.csv")).unwrap()
    );
}

#[test]
fn single_point_sweep_matches_simulate() {
    let sim_dir = tempfile::tempdir().unwrap();
    let out = hsps(&[
        "simulate",
        "--duration",
        "1ms",
        "--seed",
        "21",
        "--out",
        sim_dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let sweep_dir = tempfile::tempdir().unwrap();
    let out = hsps(&[
        "sweep",
        "--grid",
        "40",
        "--duration",
        "1ms",
        "--seed",
        "21",
        "--out",
        sweep_dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let sim_csv = std::fs::read_to_string(sim_dir.path().join("results.csv")).unwrap();
    let sweep_csv = std::fs::read_to_string(sweep_dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sim_csv, sweep_csv);
}

#[test]
fn sweep_svg_axes_span_data_extent() {
    let dir = tempfile::tempdir().unwrap();
    let out = hsps(&[
        "sweep",
        "--grid",
        "10,40",
        "--duration",
        "1ms",
        "--seed",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
        "--svg",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rates: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let svg = std::fs::read_to_string(dir.path().join("p1_vs_rh.svg")).unwrap();
    let lo = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(svg.contains(&format!(">{lo}<")), "x_min {lo} not on axis");
    assert!(svg.contains(&format!(">{hi}<")), "x_max {hi} not on axis");
    assert!(std::fs::metadata(dir.path().join("g2_vs_rh.svg")).is_ok());
}

#[test]
fn table_prints_catalog_and_simulated_row() {
    let out = hsps(&["table"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("Nice"));
    assert!(text.contains("Geneva"));
    assert!(text.contains("expected values"));
    let out = hsps(&["table", "--simulate", "--duration", "1ms", "--seed", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("simulated"));
}

#[test]
fn project_reports_rate_scale() {
    let out = hsps(&["project", "--new-eta-d", "0.9", "--new-gamma", "0.8", "--json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let projected = json["projected"]["r_h_hz"]["value"].as_f64().unwrap();
    assert!((projected - 14.82e6).abs() < 0.02e6, "projected {projected}");
    let scale = json["rate_scale"].as_f64().unwrap();
    assert!((scale - 7.0588).abs() < 1e-3);
}

#[test]
fn csv_cells_are_finite_or_sentinel() {
    let dir = tempfile::tempdir().unwrap();
    // A sweep with an unreachable point (negative power) leaves an error row.
    let out = hsps(&[
        "sweep",
        "--grid",
        "-5,40",
        "--duration",
        "200us",
        "--seed",
        "4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let error_row = csv.lines().nth(1).unwrap();
    assert!(error_row.contains("NA"));
    assert!(!error_row.ends_with(','), "error column populated: {error_row}");
    for cell in csv.lines().skip(1).flat_map(|l| l.split(',').take(9)) {
        assert!(
            cell == "NA" || cell.parse::<f64>().map(f64::is_finite).unwrap_or(false),
            "cell '{cell}' is neither finite nor the sentinel"
        );
    }
}
