use std::fs;
use std::process::Command;

fn fasarray(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_fasarray")).args(args).output().expect("binary runs");
    (
        out.status.success(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn analyze_builtin_nested() {
    let (ok, out, err) = fasarray(&["analyze", "--array", "nested", "--n", "6"]);
    assert!(ok, "{err}");
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "n_elements,aperture_d0,lags_d0,m_c,dof,dual_bound");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "6");
    assert_eq!(row[3], "11");
    assert_eq!(row[4], "23");
    assert_eq!(row[5], "25");
}

#[test]
fn analyze_geometry_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    fs::write(&path, r#"{"wavelength": 1.0, "aperture": 3.0, "positions": [0.0, 0.5, 2.0, 3.0]}"#).unwrap();
    let (ok, out, err) = fasarray(&["analyze", "--geometry", path.to_str().unwrap()]);
    assert!(ok, "{err}");
    // {0,1,4,6}·d0: every lag 0..6 present
    assert!(out.lines().nth(1).unwrap().ends_with(",6,13,13"), "{out}");
}

#[test]
fn crb_csv_columns() {
    let (ok, out, err) = fasarray(&["crb", "--sources", "10,25", "--aperture-d0", "40"]);
    assert!(ok, "{err}");
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "aperture_over_d0,array_type,source_index,sqrt_crb_degrees");
    assert_eq!(lines.len(), 1 + 4 * 2);
    let fas: Vec<f64> = lines.iter().filter(|l| l.contains(",fas,")).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    let mra: Vec<f64> = lines.iter().filter(|l| l.contains(",mra,")).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(fas.iter().zip(&mra).all(|(f, m)| f < m));
}

#[test]
fn design_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let geom = dir.path().join("fas.json");
    let spectrum = dir.path().join("spectrum.csv");
    let (ok, out, err) = fasarray(&["design", "--sources", "10,25", "--out", geom.to_str().unwrap()]);
    assert!(ok, "{err}");
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(report["kw_gap"].as_f64().unwrap() <= 1e-3);
    assert_eq!(report["positions_d0"].as_array().unwrap().len(), 6);

    let (ok, out, err) = fasarray(&[
        "estimate",
        "--geometry",
        geom.to_str().unwrap(),
        "--sources",
        "10,25",
        "--snr-db",
        "20",
        "--seed",
        "3",
        "--dump-spectrum",
        spectrum.to_str().unwrap(),
    ]);
    assert!(ok, "{err}");
    let est: serde_json::Value = serde_json::from_str(&out).unwrap();
    let hat: Vec<f64> = est["theta_hat_deg"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((hat[0] - 10.0).abs() < 0.05 && (hat[1] - 25.0).abs() < 0.05, "{hat:?}");
    let text = fs::read_to_string(&spectrum).unwrap();
    assert!(text.starts_with("angle_deg,value\n"));
    assert_eq!(text.lines().count(), 1 + 8999);
}

#[test]
fn negative_directions_parse() {
    let (ok, out, err) = fasarray(&["crb", "--sources", "-30,20", "--snr-db", "-5"]);
    assert!(ok, "{err}");
    assert_eq!(out.lines().count(), 1 + 3 * 2);
}

#[test]
fn experiment_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"experiment": "rmse_vs_snr", "n_antennas": 6, "num_sources": 2, "doas_deg": [10, 25],
            "aperture_d0": 40, "snr_db": [15], "snapshots": 100, "trials": 10, "master_seed": 5,
            "algorithms": ["music"]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let (ok, _, err) = fasarray(&["experiment", "rmse_vs_snr", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--trials", "2"]);
    assert!(ok, "{err}");
    let csv = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert!(csv.starts_with("experiment,array_type,algorithm,sweep_variable,sweep_value,rmse_degrees,sqrt_crb_degrees,trials,runtime_seconds"));
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(7) == Some("2")));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["trials"], 2);
    assert_eq!(manifest["content_hash"].as_str().unwrap().len(), 64);
    assert!(out_dir.join("positions.json").exists());
}

#[test]
fn bad_inputs_fail_cleanly() {
    let (ok, _, err) = fasarray(&["experiment", "nope", "--out", "/nonexistent/x"]);
    assert!(!ok);
    assert!(err.contains("unknown experiment") || err.contains("trial"), "{err}");
    let (ok, _, _) = fasarray(&["analyze"]);
    assert!(!ok);
}
