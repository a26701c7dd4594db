//! Monte Carlo experiment runner: configuration, RMSE estimation, result
//! tables and run artifacts.

mod experiments;

pub use experiments::{dispatch, 
    experiment_adaptive, experiment_crb_vs_d, experiment_positions, experiment_resolution, experiment_rmse_vs_snr,
    experiment_scaling_n, run_experiment, ExperimentOutput, PositionListing,
};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::DesignConfig;
use crate::error::{invalid, Error, Result};
use crate::estimation::{adaptive_fas_music, coarray_music, fas_music, music_estimate, EstimateResult, EstimatorConfig};
use crate::fisher::{crb, fim_exact};
use crate::geometry::ArrayGeometry;
use crate::signal::{derive_seed, sample_covariance, synthesize_snapshots, SourceScenario};

/// Estimators the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Music,
    CoarrayMusic,
    FasMusic,
    Adaptive,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Music => "music",
            Algorithm::CoarrayMusic => "coarray-music",
            Algorithm::FasMusic => "fas-music",
            Algorithm::Adaptive => "adaptive",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "music" => Ok(Algorithm::Music),
            "coarray-music" => Ok(Algorithm::CoarrayMusic),
            "fas-music" => Ok(Algorithm::FasMusic),
            "adaptive" => Ok(Algorithm::Adaptive),
            other => Err(invalid(format!(
                "unknown algorithm '{other}' (expected music, coarray-music, fas-music or adaptive)"
            ))),
        }
    }
}

fn default_wavelength() -> f64 {
    1.0
}
fn default_d_sweep() -> Vec<f64> {
    (1..=10).map(|i| 4.0 * i as f64).collect()
}
fn default_separations() -> Vec<f64> {
    vec![0.5, 1.0, 1.5, 2.0, 3.0, 5.0]
}
fn default_n_values() -> Vec<usize> {
    vec![4, 5, 6, 7, 8]
}
fn default_k_adapt() -> usize {
    1
}
fn default_mismatched() -> Vec<f64> {
    vec![0.0, 45.0]
}
fn default_position_scenarios() -> Vec<Vec<f64>> {
    vec![vec![10.0, 25.0], vec![-30.0, 30.0], vec![0.0, 5.0], vec![-40.0, 0.0, 40.0]]
}
fn default_delta() -> f64 {
    5.0
}
fn default_grid_step() -> f64 {
    0.02
}

/// Experiment configuration, read from JSON.
///
/// Fields beyond the core scenario have desk-scale defaults and only matter
/// to the experiments that sweep them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub n_antennas: usize,
    pub num_sources: usize,
    pub doas_deg: Vec<f64>,
    pub aperture_d0: f64,
    pub snr_db: Vec<f64>,
    pub snapshots: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default = "default_wavelength")]
    pub wavelength: f64,
    #[serde(default = "default_d_sweep")]
    pub d_sweep_d0: Vec<f64>,
    #[serde(default = "default_separations")]
    pub separations_deg: Vec<f64>,
    #[serde(default = "default_n_values")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_k_adapt")]
    pub k_adapt: usize,
    #[serde(default = "default_mismatched")]
    pub mismatched_doas_deg: Vec<f64>,
    #[serde(default = "default_position_scenarios")]
    pub position_scenarios_deg: Vec<Vec<f64>>,
    #[serde(default = "default_delta")]
    pub delta_deg: f64,
    #[serde(default = "default_grid_step")]
    pub grid_step_deg: f64,
}

impl ExperimentConfig {
    /// Desk-scale defaults for a named experiment: `N = 6`, sources at 10°
    /// and 25°, `D = 40·d0`, 500 snapshots, 50 trials. SNR sweeps run
    /// −5…25 dB; single-SNR experiments use 10 dB (15 dB for resolution).
    pub fn desk(experiment: &str) -> Self {
        let snr_db = match experiment {
            "resolution" => vec![15.0],
            "scaling_n" | "crb_vs_d" | "positions" => vec![10.0],
            "adaptive" => vec![5.0, 10.0, 15.0, 20.0, 25.0],
            _ => (0..7).map(|i| -5.0 + 5.0 * i as f64).collect(),
        };
        Self {
            experiment: experiment.to_string(),
            n_antennas: 6,
            num_sources: 2,
            doas_deg: vec![10.0, 25.0],
            aperture_d0: 40.0,
            snr_db,
            snapshots: 500,
            trials: 50,
            master_seed: 20_240_601,
            algorithms: vec![Algorithm::Music, Algorithm::CoarrayMusic, Algorithm::FasMusic],
            output: None,
            wavelength: default_wavelength(),
            d_sweep_d0: default_d_sweep(),
            separations_deg: default_separations(),
            n_values: default_n_values(),
            k_adapt: default_k_adapt(),
            mismatched_doas_deg: default_mismatched(),
            position_scenarios_deg: default_position_scenarios(),
            delta_deg: default_delta(),
            grid_step_deg: default_grid_step(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trial count must be at least 1"));
        }
        if self.snr_db.is_empty() {
            return Err(invalid("SNR list must not be empty"));
        }
        if self.doas_deg.len() != self.num_sources {
            return Err(invalid(format!(
                "num_sources is {} but {} directions were given",
                self.num_sources,
                self.doas_deg.len()
            )));
        }
        if self.n_antennas < 2 {
            return Err(invalid("at least two antennas are required"));
        }
        if !(self.aperture_d0 > 0.0) || !(self.wavelength > 0.0) {
            return Err(invalid("aperture and wavelength must be positive"));
        }
        if self.snapshots == 0 {
            return Err(invalid("at least one snapshot is required"));
        }
        Ok(())
    }

    pub fn d0(&self) -> f64 {
        self.wavelength / 2.0
    }

    pub fn aperture(&self) -> f64 {
        self.aperture_d0 * self.d0()
    }

    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            grid_step_deg: self.grid_step_deg,
            delta_deg: self.delta_deg,
        }
    }

    pub fn design(&self) -> DesignConfig {
        DesignConfig::new(self.wavelength)
    }
}

/// One result row. Missing values serialize as empty cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub array_type: String,
    pub algorithm: String,
    pub sweep_variable: String,
    pub sweep_value: f64,
    pub rmse_degrees: Option<f64>,
    pub sqrt_crb_degrees: Option<f64>,
    pub trials: usize,
    pub runtime_seconds: f64,
    pub failures: usize,
    pub error: Option<String>,
}

/// Rows keyed by `(experiment, array_type, algorithm, sweep_value)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

pub const CSV_HEADER: [&str; 11] = [
    "experiment",
    "array_type",
    "algorithm",
    "sweep_variable",
    "sweep_value",
    "rmse_degrees",
    "sqrt_crb_degrees",
    "trials",
    "runtime_seconds",
    "failures",
    "error",
];

/// Shortest decimal form of `v` rounded to 9 significant digits.
pub fn format_sig9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("valid float");
    format!("{rounded}")
}

impl ResultTable {
    pub fn push(&mut self, row: ResultRow) {
        self.rows.push(row);
    }

    /// Sorts rows by key so output does not depend on execution order.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (&a.experiment, &a.array_type, &a.algorithm)
                .cmp(&(&b.experiment, &b.array_type, &b.algorithm))
                .then(a.sweep_value.total_cmp(&b.sweep_value))
        });
    }

    pub fn find(&self, array_type: &str, algorithm: &str, sweep_value: f64) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.array_type == array_type && r.algorithm == algorithm && (r.sweep_value - sweep_value).abs() < 1e-9)
    }

    /// CSV text with the fixed column order; floats carry 9 significant
    /// digits and runtimes are omitted when `with_runtime` is false.
    pub fn to_csv(&self, with_runtime: bool) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let map = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        w.write_record(CSV_HEADER).map_err(map)?;
        let opt = |v: Option<f64>| v.map(format_sig9).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.experiment.clone(),
                r.array_type.clone(),
                r.algorithm.clone(),
                r.sweep_variable.clone(),
                format_sig9(r.sweep_value),
                opt(r.rmse_degrees),
                opt(r.sqrt_crb_degrees),
                r.trials.to_string(),
                if with_runtime { format_sig9(r.runtime_seconds) } else { String::new() },
                r.failures.to_string(),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(map)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("utf-8 csv"))
    }
}

/// Aggregate of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloOutcome {
    /// `None` when every trial failed.
    pub rmse_deg: Option<f64>,
    pub trials: usize,
    pub failures: usize,
    pub first_error: Option<String>,
}

/// Squared error summed over sources after sorting both vectors.
pub fn squared_error(estimates: &[f64], truth: &[f64]) -> f64 {
    let mut e = estimates.to_vec();
    let mut t = truth.to_vec();
    e.sort_by(f64::total_cmp);
    t.sort_by(f64::total_cmp);
    e.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Runs one estimator on one trial's data.
pub fn run_trial(
    geom: &ArrayGeometry,
    scenario: &SourceScenario,
    algorithm: Algorithm,
    seed: u64,
    estimator: &EstimatorConfig,
    design: &DesignConfig,
    k_adapt: usize,
) -> Result<EstimateResult> {
    let l = scenario.num_sources();
    match algorithm {
        Algorithm::Music => {
            let r = sample_covariance(&synthesize_snapshots(geom, scenario, seed));
            music_estimate(&r, geom, l, estimator.grid_step_deg)
        }
        Algorithm::CoarrayMusic => {
            let r = sample_covariance(&synthesize_snapshots(geom, scenario, seed));
            coarray_music(&r, geom, l, estimator.grid_step_deg)
        }
        Algorithm::FasMusic => fas_music(&synthesize_snapshots(geom, scenario, seed), geom, l, estimator),
        Algorithm::Adaptive => {
            let mut step = 0u64;
            let source = |g: &ArrayGeometry| {
                let s = derive_seed(seed, step);
                step += 1;
                Ok(synthesize_snapshots(g, scenario, s))
            };
            adaptive_fas_music(source, geom.len(), geom.aperture(), l, k_adapt, design, estimator).map(|o| o.result)
        }
    }
}

/// RMSE in degrees over `trials` independent trials, with per-trial seeds
/// `derive_seed(master_seed, trial)`. Trials run in parallel; sums are
/// accumulated in trial order, so the result is bit-reproducible.
///
/// Trials whose estimator errors are tallied as failures and left out of the
/// RMSE; trials that return estimates (converged or not) are included.
pub fn monte_carlo_rmse(
    geom: &ArrayGeometry,
    scenario: &SourceScenario,
    algorithm: Algorithm,
    trials: usize,
    master_seed: u64,
    estimator: &EstimatorConfig,
    design: &DesignConfig,
    k_adapt: usize,
) -> Result<MonteCarloOutcome> {
    if trials == 0 {
        return Err(invalid("trial count must be at least 1"));
    }
    let truth = scenario.doas();
    let per_trial: Vec<std::result::Result<f64, String>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = derive_seed(master_seed, t as u64);
            run_trial(geom, scenario, algorithm, seed, estimator, design, k_adapt)
                .map(|est| squared_error(&est.theta_hat, truth))
                .map_err(|e| e.to_string())
        })
        .collect();
    let mut sum = 0.0;
    let mut ok = 0usize;
    let mut first_error = None;
    for r in &per_trial {
        match r {
            Ok(v) => {
                sum += v;
                ok += 1;
            }
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(e.clone());
                }
            }
        }
    }
    let rmse_deg = (ok > 0).then(|| (sum / (ok * truth.len()) as f64).sqrt().to_degrees());
    Ok(MonteCarloOutcome {
        rmse_deg,
        trials,
        failures: trials - ok,
        first_error,
    })
}

/// `sqrt(mean_ℓ CRB_ℓ)` in degrees.
pub fn rms_sqrt_crb_deg(geom: &ArrayGeometry, scenario: &SourceScenario) -> Result<f64> {
    let c = crb(&fim_exact(geom, scenario)?)?;
    Ok((c.iter().sum::<f64>() / c.len() as f64).sqrt().to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_ula;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig9(0.123456789123), "0.123456789");
        assert_eq!(format_sig9(2.0), "2");
        assert_eq!(format_sig9(1.0e-7 / 3.0), "0.0000000333333333");
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in [Algorithm::Music, Algorithm::CoarrayMusic, Algorithm::FasMusic, Algorithm::Adaptive] {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        assert!("esprit".parse::<Algorithm>().is_err());
    }

    #[test]
    fn zero_trials_rejected() {
        let mut c = ExperimentConfig::desk("rmse_vs_snr");
        c.trials = 0;
        assert!(c.validate().is_err());
        let g = make_ula(4, 0.5).unwrap();
        let s = SourceScenario::equal_power_deg(&[0.0], 0.0, 10).unwrap();
        let d = DesignConfig::new(1.0);
        let e = EstimatorConfig::default();
        assert!(monte_carlo_rmse(&g, &s, Algorithm::Music, 0, 1, &e, &d, 0).is_err());
    }

    #[test]
    fn noiseless_rmse_is_tiny_and_reproducible() {
        let g = make_ula(6, 0.5).unwrap();
        let s = SourceScenario::new(vec![0.2], vec![1.0], 0.0, 50).unwrap();
        let d = DesignConfig::new(1.0);
        let e = EstimatorConfig::default();
        let a = monte_carlo_rmse(&g, &s, Algorithm::FasMusic, 5, 3, &e, &d, 0).unwrap();
        assert!(a.rmse_deg.unwrap() < 1e-4);
        let b = monte_carlo_rmse(&g, &s, Algorithm::FasMusic, 5, 3, &e, &d, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_layout() {
        let mut t = ResultTable::default();
        t.push(ResultRow {
            experiment: "x".into(),
            array_type: "ula".into(),
            algorithm: "music".into(),
            sweep_variable: "snr_db".into(),
            sweep_value: 10.0,
            rmse_degrees: Some(0.5),
            sqrt_crb_degrees: None,
            trials: 3,
            runtime_seconds: 0.25,
            failures: 0,
            error: Some("a, b".into()),
        });
        let text = t.to_csv(true).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(lines.next().unwrap(), "x,ula,music,snr_db,10,0.5,,3,0.25,0,\"a, b\"");
    }
}
