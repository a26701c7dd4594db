use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{monte_carlo_rmse, rms_sqrt_crb_deg, Algorithm, ExperimentConfig, ResultRow, ResultTable};
use crate::design::{design_positions, DesignOutcome};
use crate::error::{invalid, Result};
use crate::geometry::{make_mra, make_nested_best_split, make_ula, ArrayGeometry};
use crate::signal::{derive_seed, SourceScenario};

/// Per-source power (σ² = 1) of the nominal scenario used to design
/// positions: 10 dB, 500 snapshots.
const DESIGN_POWER: f64 = 10.0;
const DESIGN_SNAPSHOTS: usize = 500;

/// Designed positions for one scenario, in units of `d0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionListing {
    pub label: String,
    pub doas_deg: Vec<f64>,
    pub aperture_d0: f64,
    pub positions_d0: Vec<f64>,
    pub dof: usize,
    pub log_det: f64,
    pub kw_gap: f64,
    pub error: Option<String>,
}

/// Result rows plus any designed geometries.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    pub positions: Vec<PositionListing>,
}

/// Errors kept as text so results can be shared between rows.
type Fallible<T> = std::result::Result<T, String>;

fn keep<T>(r: Result<T>) -> Fallible<T> {
    r.map_err(|e| e.to_string())
}

fn design_for(config: &ExperimentConfig, doas_deg: &[f64], n: usize, aperture_d0: f64) -> Fallible<DesignOutcome> {
    let s = SourceScenario::new(
        doas_deg.iter().map(|d| d.to_radians()).collect(),
        vec![DESIGN_POWER; doas_deg.len()],
        1.0,
        DESIGN_SNAPSHOTS,
    );
    keep(s.and_then(|s| design_positions(&s, n, aperture_d0 * config.d0(), &config.design())))
}

fn geometry_of(outcome: &Fallible<DesignOutcome>) -> Fallible<ArrayGeometry> {
    outcome.as_ref().map(|o| o.geometry.clone()).map_err(Clone::clone)
}

fn listing(label: String, doas_deg: &[f64], aperture_d0: f64, d0: f64, outcome: &Fallible<DesignOutcome>) -> PositionListing {
    match outcome {
        Ok(o) => PositionListing {
            label,
            doas_deg: doas_deg.to_vec(),
            aperture_d0,
            positions_d0: o.geometry.positions().iter().map(|p| p / d0).collect(),
            dof: o.dof,
            log_det: o.log_det,
            kw_gap: o.measure.kw_gap,
            error: None,
        },
        Err(e) => PositionListing {
            label,
            doas_deg: doas_deg.to_vec(),
            aperture_d0,
            positions_d0: Vec::new(),
            dof: 0,
            log_det: f64::NAN,
            kw_gap: f64::NAN,
            error: Some(e.clone()),
        },
    }
}

/// One Monte Carlo cell to evaluate.
struct Cell {
    array_type: String,
    algorithm: Algorithm,
    geometry: Fallible<ArrayGeometry>,
    /// Geometry whose bound is reported; defaults to `geometry`.
    crb_geometry: Option<ArrayGeometry>,
    scenario: Fallible<SourceScenario>,
    sweep_value: f64,
    master_seed: u64,
}

fn error_row(config: &ExperimentConfig, array_type: &str, algorithm: &str, sweep_variable: &str, sweep_value: f64, e: &dyn std::fmt::Display) -> ResultRow {
    ResultRow {
        experiment: config.experiment.clone(),
        array_type: array_type.to_string(),
        algorithm: algorithm.to_string(),
        sweep_variable: sweep_variable.to_string(),
        sweep_value,
        rmse_degrees: None,
        sqrt_crb_degrees: None,
        trials: 0,
        runtime_seconds: 0.0,
        failures: 0,
        error: Some(e.to_string()),
    }
}

fn run_cells(config: &ExperimentConfig, sweep_variable: &str, cells: Vec<Cell>) -> ResultTable {
    let estimator = config.estimator();
    let design = config.design();
    let rows: Vec<ResultRow> = cells
        .into_par_iter()
        .map(|cell| {
            let started = Instant::now();
            let name = cell.algorithm.as_str();
            let (geom, scenario) = match (&cell.geometry, &cell.scenario) {
                (Ok(g), Ok(s)) => (g, s),
                (Err(e), _) | (_, Err(e)) => {
                    return error_row(config, &cell.array_type, name, sweep_variable, cell.sweep_value, e);
                }
            };
            let bound = rms_sqrt_crb_deg(cell.crb_geometry.as_ref().unwrap_or(geom), scenario);
            let mc = monte_carlo_rmse(geom, scenario, cell.algorithm, config.trials, cell.master_seed, &estimator, &design, config.k_adapt);
            let mut row = match mc {
                Ok(out) => ResultRow {
                    experiment: config.experiment.clone(),
                    array_type: cell.array_type.clone(),
                    algorithm: name.to_string(),
                    sweep_variable: sweep_variable.to_string(),
                    sweep_value: cell.sweep_value,
                    rmse_degrees: out.rmse_deg,
                    sqrt_crb_degrees: None,
                    trials: out.trials,
                    runtime_seconds: 0.0,
                    failures: out.failures,
                    error: out.first_error,
                },
                Err(e) => error_row(config, &cell.array_type, name, sweep_variable, cell.sweep_value, &e),
            };
            match bound {
                Ok(b) => row.sqrt_crb_degrees = Some(b),
                Err(e) if row.error.is_none() => row.error = Some(e.to_string()),
                Err(_) => {}
            }
            row.runtime_seconds = started.elapsed().as_secs_f64();
            row
        })
        .collect();
    let mut table = ResultTable { rows };
    table.sort();
    table
}

fn wants(config: &ExperimentConfig, a: Algorithm) -> bool {
    config.algorithms.contains(&a)
}

fn scenario_at(config: &ExperimentConfig, doas_deg: &[f64], snr_db: f64) -> Result<SourceScenario> {
    SourceScenario::equal_power_deg(doas_deg, snr_db, config.snapshots)
}

fn crb_row(config: &ExperimentConfig, array_type: &str, sweep_variable: &str, sweep_value: f64, geom: &Fallible<ArrayGeometry>, scenario: &SourceScenario) -> ResultRow {
    let started = Instant::now();
    let result = geom.clone().and_then(|g| keep(rms_sqrt_crb_deg(&g, scenario)));
    let mut row = match result {
        Ok(b) => ResultRow {
            experiment: config.experiment.clone(),
            array_type: array_type.to_string(),
            algorithm: "crb".to_string(),
            sweep_variable: sweep_variable.to_string(),
            sweep_value,
            rmse_degrees: None,
            sqrt_crb_degrees: Some(b),
            trials: 0,
            runtime_seconds: 0.0,
            failures: 0,
            error: None,
        },
        Err(e) => error_row(config, array_type, "crb", sweep_variable, sweep_value, &e),
    };
    row.runtime_seconds = started.elapsed().as_secs_f64();
    row
}

/// Bound versus aperture: D-optimal positions at each `D` in the sweep
/// against the fixed ULA, nested and MRA layouts with `N` elements. Uses
/// the first SNR of the list.
pub fn experiment_crb_vs_d(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let d0 = config.d0();
    let scenario = scenario_at(config, &config.doas_deg, config.snr_db[0])?;
    let fixed = [
        ("ula", keep(make_ula(config.n_antennas, d0))),
        ("nested", keep(make_nested_best_split(config.n_antennas, d0))),
        ("mra", keep(make_mra(config.n_antennas, d0))),
    ];
    let designs: Vec<(f64, Fallible<DesignOutcome>)> = config
        .d_sweep_d0
        .par_iter()
        .map(|&dd| (dd, design_for(config, &config.doas_deg, config.n_antennas, dd)))
        .collect();
    let mut out = ExperimentOutput::default();
    for (dd, outcome) in &designs {
        let geom = geometry_of(&outcome);
        out.table.push(crb_row(config, "fas", "aperture_d0", *dd, &geom, &scenario));
        for (name, g) in &fixed {
            out.table.push(crb_row(config, name, "aperture_d0", *dd, g, &scenario));
        }
        out.positions.push(listing(format!("D={dd}d0"), &config.doas_deg, *dd, d0, outcome));
    }
    out.table.sort();
    Ok(out)
}

/// RMSE versus SNR for array/estimator combinations: ULA and MRA with
/// MUSIC, nested and MRA with coarray MUSIC, and the D-optimal layout with
/// every requested estimator.
pub fn experiment_rmse_vs_snr(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let d0 = config.d0();
    let fas = design_for(config, &config.doas_deg, config.n_antennas, config.aperture_d0);
    let fas_geom = geometry_of(&fas);
    let combos: Vec<(&str, Algorithm, Fallible<ArrayGeometry>)> = vec![
        ("ula", Algorithm::Music, keep(make_ula(config.n_antennas, d0))),
        ("mra", Algorithm::Music, keep(make_mra(config.n_antennas, d0))),
        ("nested", Algorithm::CoarrayMusic, keep(make_nested_best_split(config.n_antennas, d0))),
        ("mra", Algorithm::CoarrayMusic, keep(make_mra(config.n_antennas, d0))),
        ("fas", Algorithm::Music, fas_geom.clone()),
        ("fas", Algorithm::CoarrayMusic, fas_geom.clone()),
        ("fas", Algorithm::FasMusic, fas_geom.clone()),
        ("fas", Algorithm::Adaptive, fas_geom),
    ];
    let mut cells = Vec::new();
    for (i, &snr) in config.snr_db.iter().enumerate() {
        let seed = derive_seed(config.master_seed, i as u64);
        for (name, alg, g) in &combos {
            if wants(config, *alg) {
                cells.push(Cell {
                    array_type: name.to_string(),
                    algorithm: *alg,
                    geometry: g.clone(),
                    crb_geometry: None,
                    scenario: keep(scenario_at(config, &config.doas_deg, snr)),
                    sweep_value: snr,
                    master_seed: seed,
                });
            }
        }
    }
    Ok(ExperimentOutput {
        table: run_cells(config, "snr_db", cells),
        positions: vec![listing("fas".into(), &config.doas_deg, config.aperture_d0, d0, &fas)],
    })
}

/// RMSE versus angular separation: sources at `θ₁` and `θ₁ + Δθ` for each
/// separation, first SNR of the list; positions re-designed per separation.
pub fn experiment_resolution(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    if config.doas_deg.is_empty() {
        return Err(invalid("resolution sweep needs a reference direction"));
    }
    let d0 = config.d0();
    let theta1 = config.doas_deg[0];
    let snr = config.snr_db[0];
    let mut cells = Vec::new();
    let mut positions = Vec::new();
    for (i, &sep) in config.separations_deg.iter().enumerate() {
        let doas = [theta1, theta1 + sep];
        let seed = derive_seed(config.master_seed, i as u64);
        let fas = design_for(config, &doas, config.n_antennas, config.aperture_d0);
        let fas_geom = geometry_of(&fas);
        positions.push(listing(format!("separation={sep}"), &doas, config.aperture_d0, d0, &fas));
        let combos: Vec<(&str, Algorithm, Fallible<ArrayGeometry>)> = vec![
            ("ula", Algorithm::Music, keep(make_ula(config.n_antennas, d0))),
            ("nested", Algorithm::CoarrayMusic, keep(make_nested_best_split(config.n_antennas, d0))),
            ("fas", Algorithm::Music, fas_geom.clone()),
            ("fas", Algorithm::CoarrayMusic, fas_geom.clone()),
            ("fas", Algorithm::FasMusic, fas_geom),
        ];
        for (name, alg, g) in combos {
            if wants(config, alg) {
                cells.push(Cell {
                    array_type: name.to_string(),
                    algorithm: alg,
                    geometry: g,
                    crb_geometry: None,
                    scenario: keep(scenario_at(config, &doas, snr)),
                    sweep_value: sep,
                    master_seed: seed,
                });
            }
        }
    }
    Ok(ExperimentOutput {
        table: run_cells(config, "separation_deg", cells),
        positions,
    })
}

/// RMSE versus antenna count at the first SNR: D-optimal layouts (aperture
/// fixed) against MRA and ULA layouts with the same number of elements.
pub fn experiment_scaling_n(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let d0 = config.d0();
    let snr = config.snr_db[0];
    let mut cells = Vec::new();
    let mut positions = Vec::new();
    for (i, &n) in config.n_values.iter().enumerate() {
        let seed = derive_seed(config.master_seed, i as u64);
        let fas = design_for(config, &config.doas_deg, n, config.aperture_d0);
        let fas_geom = geometry_of(&fas);
        positions.push(listing(format!("N={n}"), &config.doas_deg, config.aperture_d0, d0, &fas));
        let combos: Vec<(&str, Algorithm, Fallible<ArrayGeometry>)> = vec![
            ("ula", Algorithm::Music, keep(make_ula(n, d0))),
            ("mra", Algorithm::Music, keep(make_mra(n, d0))),
            ("mra", Algorithm::CoarrayMusic, keep(make_mra(n, d0))),
            ("fas", Algorithm::FasMusic, fas_geom),
        ];
        for (name, alg, g) in combos {
            if wants(config, alg) {
                cells.push(Cell {
                    array_type: name.to_string(),
                    algorithm: alg,
                    geometry: g,
                    crb_geometry: None,
                    scenario: keep(scenario_at(config, &config.doas_deg, snr)),
                    sweep_value: n as f64,
                    master_seed: seed,
                });
            }
        }
    }
    Ok(ExperimentOutput {
        table: run_cells(config, "n_antennas", cells),
        positions,
    })
}

/// Oracle positions (designed at the true directions), mismatched positions
/// (designed at `mismatched_doas_deg`), and the adaptive loop with
/// `k_adapt` re-designs, all estimated with the two-stage method.
///
/// The adaptive row reports the oracle layout's bound, the target the loop
/// converges to.
pub fn experiment_adaptive(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let d0 = config.d0();
    let oracle = design_for(config, &config.doas_deg, config.n_antennas, config.aperture_d0);
    let mismatched = if config.mismatched_doas_deg.len() == config.num_sources {
        design_for(config, &config.mismatched_doas_deg, config.n_antennas, config.aperture_d0)
    } else {
        Err("mismatched directions must have one entry per source".to_string())
    };
    let oracle_geom = geometry_of(&oracle);
    let mismatched_geom = geometry_of(&mismatched);
    // the adaptive loop only reads N and D from this layout
    let adaptive_seed_geom = keep(crate::estimation::adaptive_initial_geometry(config.n_antennas, config.aperture(), config.wavelength));
    let mut cells = Vec::new();
    for (i, &snr) in config.snr_db.iter().enumerate() {
        let seed = derive_seed(config.master_seed, i as u64);
        let scenario = || keep(scenario_at(config, &config.doas_deg, snr));
        cells.push(Cell {
            array_type: "fas-oracle".into(),
            algorithm: Algorithm::FasMusic,
            geometry: oracle_geom.clone(),
            crb_geometry: None,
            scenario: scenario(),
            sweep_value: snr,
            master_seed: seed,
        });
        cells.push(Cell {
            array_type: "fas-mismatched".into(),
            algorithm: Algorithm::FasMusic,
            geometry: mismatched_geom.clone(),
            crb_geometry: None,
            scenario: scenario(),
            sweep_value: snr,
            master_seed: seed,
        });
        cells.push(Cell {
            array_type: "fas-adaptive".into(),
            algorithm: Algorithm::Adaptive,
            geometry: adaptive_seed_geom.clone(),
            crb_geometry: oracle_geom.as_ref().ok().cloned(),
            scenario: scenario(),
            sweep_value: snr,
            master_seed: seed,
        });
    }
    Ok(ExperimentOutput {
        table: run_cells(config, "snr_db", cells),
        positions: vec![
            listing("oracle".into(), &config.doas_deg, config.aperture_d0, d0, &oracle),
            listing("mismatched".into(), &config.mismatched_doas_deg, config.aperture_d0, d0, &mismatched),
        ],
    })
}

/// D-optimal positions for each scenario in `position_scenarios_deg`, with
/// one bound row per scenario (sweep value = scenario index).
pub fn experiment_positions(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let d0 = config.d0();
    let snr = config.snr_db[0];
    let designs: Vec<(usize, &Vec<f64>, Fallible<DesignOutcome>)> = config
        .position_scenarios_deg
        .par_iter()
        .enumerate()
        .map(|(i, doas)| (i, doas, design_for(config, doas, config.n_antennas, config.aperture_d0)))
        .collect();
    let mut out = ExperimentOutput::default();
    for (i, doas, outcome) in designs {
        out.positions.push(listing(format!("scenario {i}"), doas, config.aperture_d0, d0, &outcome));
        let geom = outcome.map(|o| o.geometry);
        match scenario_at(config, doas, snr) {
            Ok(s) => out.table.push(crb_row(config, "fas", "scenario", i as f64, &geom, &s)),
            Err(e) => out.table.push(error_row(config, "fas", "crb", "scenario", i as f64, &e)),
        }
    }
    out.table.sort();
    Ok(out)
}

/// Dispatches a named experiment.
pub fn dispatch(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    match config.experiment.as_str() {
        "crb_vs_d" => experiment_crb_vs_d(config),
        "rmse_vs_snr" => experiment_rmse_vs_snr(config),
        "resolution" => experiment_resolution(config),
        "scaling_n" => experiment_scaling_n(config),
        "adaptive" => experiment_adaptive(config),
        "positions" => experiment_positions(config),
        other => Err(invalid(format!(
            "unknown experiment '{other}' (expected crb_vs_d, rmse_vs_snr, resolution, scaling_n, adaptive or positions)"
        ))),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    /// SHA-256 of results.csv with the runtime column blank.
    content_hash: String,
    results_sha256: String,
    wall_time_seconds: f64,
    rows: usize,
    version: &'static str,
}

/// Runs the experiment and writes `results.csv`, `manifest.json` and (when
/// positions were designed) `positions.json` into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<(ExperimentOutput, Vec<PathBuf>)> {
    let started = Instant::now();
    let output = dispatch(config)?;
    let wall = started.elapsed().as_secs_f64();
    fs::create_dir_all(out_dir)?;
    let csv_text = output.table.to_csv(true)?;
    let stable = output.table.to_csv(false)?;
    let mut written = Vec::new();

    let csv_path = out_dir.join("results.csv");
    fs::write(&csv_path, &csv_text)?;
    written.push(csv_path);

    let manifest = Manifest {
        config,
        content_hash: hex::encode(Sha256::digest(stable.as_bytes())),
        results_sha256: hex::encode(Sha256::digest(csv_text.as_bytes())),
        wall_time_seconds: wall,
        rows: output.table.rows.len(),
        version: env!("CARGO_PKG_VERSION"),
    };
    let manifest_path = out_dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    written.push(manifest_path);

    if !output.positions.is_empty() {
        let p = out_dir.join("positions.json");
        fs::write(&p, serde_json::to_string_pretty(&output.positions)?)?;
        written.push(p);
    }
    Ok((output, written))
}
