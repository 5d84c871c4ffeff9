use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qfc(args: &[&str]) -> Output {
    qfc_env(args, None)
}

fn qfc_env(args: &[&str], config_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qfc"));
    cmd.args(args).env_remove("QFC_CONFIG");
    if let Some(p) = config_env {
        cmd.env("QFC_CONFIG", p);
    }
    cmd.output().expect("qfc runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(o));
    serde_json::from_slice(&o.stdout).expect("json output")
}

fn bundled() -> Value {
    serde_json::from_str(qfc_cli::config::DEFAULT_CONFIG).unwrap()
}

fn write_config(dir: &Path, value: &Value) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p
}

fn curve_csv(amplitude: f64, eta: f64) -> String {
    let mut s = String::from("pump_mW,value,sigma\n");
    for i in 1..=16 {
        let p = 25.0 * i as f64;
        let v = amplitude * ((eta * p * 1e-3).sqrt() * 4.8).sin().powi(2);
        s.push_str(&format!("{p},{v},{}\n", 0.02 * v));
    }
    s
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(qfc(&["--help"]).status.code(), Some(0));
    assert_eq!(qfc(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(qfc(&[]).status.code(), Some(64));
    assert_eq!(qfc(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(qfc(&["link", "budget"]).status.code(), Some(64));
    assert_eq!(qfc(&["link", "budget", "--length-km", "ten"]).status.code(), Some(64));
    assert_eq!(qfc(&["reproduce", "fig9"]).status.code(), Some(64));
    let bad_duty = qfc(&["link", "budget", "--length-km", "10", "--duty", "1.5"]);
    assert_eq!(bad_duty.status.code(), Some(64));
    assert!(stderr(&bad_duty).contains("--duty"));
    assert_eq!(qfc(&["link", "sweep", "--from-km", "50", "--to-km", "10"]).status.code(), Some(64));
    assert_eq!(qfc(&["noise", "scale", "--npr-hz", "1", "--ref-bandwidth", "3 parsecs", "--new-bandwidth", "2pm"]).status.code(), Some(64));
    assert_eq!(qfc(&["tomo", "simulate", "--channel", "swap"]).status.code(), Some(64));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = bundled();
    cfg["filters"]["bandpass_12nm"][0]["transmission"] = 1.2.into();
    let path = write_config(dir.path(), &cfg);
    let o = qfc(&["--config", path.to_str().unwrap(), "link", "budget", "--length-km", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("filters.bandpass_12nm[0].transmission"), "{}", stderr(&o));

    let mut cfg = bundled();
    cfg["detector"]["dark_rate"] = 1.8.into();
    let path = write_config(dir.path(), &cfg);
    let o = qfc(&["--config", path.to_str().unwrap(), "reproduce", "fig2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dark_rate"), "{}", stderr(&o));

    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(qfc(&["--config", empty.to_str().unwrap(), "reproduce", "fig2"]).status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    assert_eq!(qfc(&["--config", missing.to_str().unwrap(), "reproduce", "fig2"]).status.code(), Some(2));
}

#[test]
fn environment_variable_selects_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = bundled();
    cfg["detector"]["efficiency"] = 0.2.into();
    let path = write_config(dir.path(), &cfg);
    let via_env = json(&qfc_env(&["link", "budget", "--length-km", "0", "--chi-fidelity", "0.95"], Some(&path)));
    assert!((via_env["signal_hz"].as_f64().unwrap() - 600.0).abs() < 1e-9);
    // an explicit flag wins over the environment
    let other = tempfile::tempdir().unwrap();
    let bundled_path = write_config(other.path(), &bundled());
    let explicit = json(&qfc_env(
        &["--config", bundled_path.to_str().unwrap(), "link", "budget", "--length-km", "0", "--chi-fidelity", "0.95"],
        Some(&path),
    ));
    assert!((explicit["signal_hz"].as_f64().unwrap() - 300.0).abs() < 1e-9);
}

#[test]
fn fit_efficiency_recovers_both_curves() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("fig2.csv");
    std::fs::write(&p, curve_csv(0.45, 0.56)).unwrap();
    let v = json(&qfc(&["fit-efficiency", p.to_str().unwrap()]));
    assert!((v["A"].as_f64().unwrap() - 0.45).abs() < 1e-6);
    assert!((v["eta_nor_per_W_cm2"].as_f64().unwrap() - 0.56).abs() < 1e-6);
    assert!((v["P_max_W"].as_f64().unwrap() - 0.191236).abs() < 1e-5);
    assert!(v["residual"].as_f64().unwrap() < 1e-12);

    std::fs::write(&p, curve_csv(128.6, 0.50)).unwrap();
    let v = json(&qfc(&["fit-efficiency", p.to_str().unwrap(), "--waveguide", "detected_rate"]));
    assert!((v["A"].as_f64().unwrap() - 128.6).abs() < 1e-4);
}

#[test]
fn fit_efficiency_data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "pump_mW,value,sigma\n100,0.3,0.01\n200,oops,0.01\n").unwrap();
    let o = qfc(&["fit-efficiency", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    std::fs::write(&p, "pump_mW,value,sigma\n").unwrap();
    assert_eq!(qfc(&["fit-efficiency", p.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&p, "").unwrap();
    assert_eq!(qfc(&["fit-efficiency", p.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(qfc(&["fit-efficiency", p.to_str().unwrap(), "--waveguide", "nope"]).status.code(), Some(64));
}

#[test]
fn noise_commands() {
    let v = json(&qfc(&["noise", "scale", "--npr-hz", "14000", "--ref-bandwidth", "12nm", "--new-bandwidth", "2pm"]));
    assert!((v["npr_hz"].as_f64().unwrap() - 14000.0 / 6000.0).abs() < 1e-9);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("noise.csv");
    // Boltzmann law with a 14 kHz anchor at 38 C, tabulated with the library.
    let model = qfc_core::noise::RamanNoiseModel::new(1.0, 1902.0, 1550.0).unwrap();
    let scale = 14_000.0 / model.npr_at_temperature(311.15).unwrap();
    let mut csv = String::from("temp_C,counts_Hz,sigma\n");
    for t in [-50.0, -20.0, 0.0, 20.0, 38.0] {
        let n = scale * model.npr_at_temperature(t + 273.15).unwrap();
        csv.push_str(&format!("{t},{n},{}\n", 0.05 * n));
    }
    std::fs::write(&p, csv).unwrap();
    let v = json(&qfc(&["noise", "fit", p.to_str().unwrap()]));
    assert!((v["npr_reference_temp_hz"].as_f64().unwrap() - 14_000.0).abs() < 1e-6);
    assert!((v["cooling_factor"].as_f64().unwrap() - 8.822).abs() < 1e-3);

    std::fs::write(&p, "temp_C,counts_Hz,sigma\n38,14000,700\n").unwrap();
    assert_eq!(qfc(&["noise", "fit", p.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn tomography_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("records.csv");
    let sim = qfc(&["tomo", "simulate", "--channel", "identity", "--out", csv.to_str().unwrap()]);
    assert_eq!(sim.status.code(), Some(0), "{}", stderr(&sim));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 37);
    assert_eq!(text.lines().next(), Some("probe,analyzer,outcome,counts,duration_s"));

    let v = json(&qfc(&["tomo", "reconstruct", csv.to_str().unwrap()]));
    assert!(v["chi11_unitary_optimized"].as_f64().unwrap() >= 0.99);
    assert_eq!(v["basis"], "I,Z,X,-iY");
    assert_eq!(v["chi_re"].as_array().unwrap().len(), 4);
    assert_eq!(v["angles"].as_array().unwrap().len(), 3);

    let short: String = text.lines().take(36).map(|l| format!("{l}\n")).collect();
    std::fs::write(&csv, short).unwrap();
    let o = qfc(&["tomo", "reconstruct", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing setting"), "{}", stderr(&o));
}

#[test]
fn background_subtraction_raises_identity_weight() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("device.csv");
    let sim = qfc(&[
        "tomo", "simulate", "--channel", "surrogate:0.95", "--background-hz", "2500", "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(sim.status.code(), Some(0));
    let raw = json(&qfc(&["tomo", "reconstruct", csv.to_str().unwrap()]));
    let sub = json(&qfc(&["tomo", "reconstruct", csv.to_str().unwrap(), "--subtract-background-hz", "2500"]));
    let (r, s) = (raw["chi11"].as_f64().unwrap(), sub["chi11"].as_f64().unwrap());
    assert!((r - 0.93).abs() < 0.01, "{r}");
    assert!((s - 0.95).abs() < 0.01, "{s}");
}

#[test]
fn simulation_is_deterministic() {
    let a = qfc(&["tomo", "simulate", "--channel", "unitary:0.3,1.0,2.0", "--seed", "7"]);
    let b = qfc(&["tomo", "simulate", "--channel", "unitary:0.3,1.0,2.0", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = qfc(&["tomo", "simulate", "--channel", "unitary:0.3,1.0,2.0", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn link_commands() {
    let v = json(&qfc(&["link", "budget", "--length-km", "84"]));
    assert!((v["signal_hz"].as_f64().unwrap() - 6.27).abs() < 0.01);
    assert!((v["snr_total_over_dark"].as_f64().unwrap() - 4.5).abs() < 0.1);
    assert!(v["negativity"].as_f64().unwrap() < 1e-6);

    let v = json(&qfc(&["link", "budget", "--length-km", "0"]));
    assert!((v["signal_hz"].as_f64().unwrap() - 300.0).abs() < 1e-9);

    let v = json(&qfc(&["link", "max-distance", "--dark-hz", "0.36", "--alpha", "0.18"]));
    assert!((v["distance_km"].as_f64().unwrap() - 122.0).abs() <= 2.0);
    assert_eq!(v["threshold_found"], true);

    let gated = json(&qfc(&["link", "max-distance", "--duty", "0.2", "--alpha", "0.18"]));
    assert!((gated["dark_rate_hz"].as_f64().unwrap() - 0.36).abs() < 1e-12);
    assert!((gated["distance_km"].as_f64().unwrap() - v["distance_km"].as_f64().unwrap()).abs() < 1e-9);

    let sweep = qfc(&["link", "sweep", "--from-km", "0", "--to-km", "10", "--step-km", "5"]);
    assert_eq!(sweep.status.code(), Some(0));
    let text = stdout(&sweep);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "length_km,signal_hz,negativity");
    assert_eq!(lines.len(), 4);
}

#[test]
fn reproduce_reports_named_checks() {
    let o = qfc(&["reproduce", "distances"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("84 km signal rate"));
    let o = qfc(&["reproduce", "fig3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("noise reduction from cooling"));
}

#[test]
fn reproduce_failure_exits_1_and_lists_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = bundled();
    cfg["link"]["conversion_efficiency"] = 0.2.into();
    let path = write_config(dir.path(), &cfg);
    let o = qfc(&["--config", path.to_str().unwrap(), "reproduce", "distances"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL  distances: 84 km signal rate"));
    assert!(stderr(&o).contains("84 km signal rate"), "{}", stderr(&o));
}

#[test]
fn reproduce_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = qfc(&["reproduce", "fig2", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("fig2_efficiency.csv")).unwrap();
    assert!(text.starts_with("pump_mW,efficiency,residual_input\n"));
    assert_eq!(text.lines().count(), 102);
}
