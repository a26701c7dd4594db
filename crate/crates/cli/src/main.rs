use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use fasarray::design::{design_positions, DesignConfig};
use fasarray::estimation::{adaptive_fas_music, coarray_music, fas_music, music_estimate, EstimatorConfig};
use fasarray::fisher::{fim_exact, sqrt_crb_degrees};
use fasarray::geometry::{
    coarray_dof, difference_coarray, dual_dof_bound, make_coprime, make_mra, make_nested_best_split, make_ula,
    ArrayGeometry, DifferenceCoarray,
};
use fasarray::harness::{run_experiment, ExperimentConfig};
use fasarray::signal::{derive_seed, sample_covariance, synthesize_snapshots, SourceScenario};

#[derive(Parser)]
#[command(name = "fasarray", version, about = "Sparse fluid-antenna array design and DOA estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Difference-coarray summary of a geometry as one CSV row.
    Analyze(AnalyzeArgs),
    /// Square-root Cramér-Rao bounds for classical and designed layouts (CSV).
    Crb(CrbArgs),
    /// D-optimal position design; writes geometry JSON and prints a report.
    Design(DesignArgs),
    /// Simulate snapshots and estimate directions; prints JSON.
    Estimate(EstimateArgs),
    /// Run a named Monte Carlo experiment.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Ula,
    Nested,
    Coprime,
    Mra,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Geometry JSON file.
    #[arg(long, conflicts_with = "array")]
    geometry: Option<PathBuf>,
    /// Built-in layout instead of a file.
    #[arg(long, value_enum, requires = "n")]
    array: Option<Layout>,
    /// Element count for a built-in layout (coprime: M,Nc).
    #[arg(long)]
    n: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    wavelength: f64,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Source directions in degrees, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    sources: Vec<f64>,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    snr_db: f64,
    #[arg(long, default_value_t = 500)]
    snapshots: usize,
    #[arg(long, default_value_t = 1.0)]
    wavelength: f64,
}

impl ScenarioArgs {
    fn scenario(&self) -> Result<SourceScenario> {
        Ok(SourceScenario::equal_power_deg(&self.sources, self.snr_db, self.snapshots)?)
    }
}

#[derive(Args)]
struct CrbArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 6)]
    n_antennas: usize,
    /// Apertures (in d0) at which to design FAS positions, comma separated.
    #[arg(long, value_delimiter = ',')]
    aperture_d0: Vec<f64>,
    /// Additional geometry JSON files to evaluate.
    #[arg(long)]
    geometry: Vec<PathBuf>,
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 6)]
    n_antennas: usize,
    #[arg(long, default_value_t = 40.0)]
    aperture_d0: f64,
    /// Kiefer-Wolfowitz stopping tolerance.
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.4)]
    d_min_d0: f64,
    /// Recorded in the report; the design itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Geometry output path (stdout report only when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the coarray refinement stage.
    #[arg(long)]
    no_refine: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Music,
    CoarrayMusic,
    FasMusic,
    Adaptive,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    geometry: PathBuf,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "fas-music")]
    algorithm: AlgorithmArg,
    #[arg(long, default_value_t = 5.0)]
    delta_deg: f64,
    #[arg(long, default_value_t = 1)]
    k_adapt: usize,
    #[arg(long, default_value_t = 0.02)]
    grid_step_deg: f64,
    /// Write the MUSIC pseudo-spectrum to this CSV file.
    #[arg(long)]
    dump_spectrum: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// crb_vs_d, rmse_vs_snr, resolution, scaling_n, adaptive or positions.
    name: String,
    /// JSON configuration; desk defaults for the experiment when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Analyze(a) => analyze(&a, &mut stdout),
        Command::Crb(a) => crb(&a, &mut stdout),
        Command::Design(a) => design(&a, &mut stdout),
        Command::Estimate(a) => estimate(&a, &mut stdout),
        Command::Experiment(a) => experiment(&a, &mut stdout),
    }
}

fn read_geometry(path: &Path) -> Result<ArrayGeometry> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ArrayGeometry::from_json(&text).with_context(|| format!("parsing geometry {}", path.display()))
}

fn builtin(layout: Layout, n: &str, d0: f64) -> Result<ArrayGeometry> {
    let parse = |s: &str| s.trim().parse::<usize>().with_context(|| format!("bad element count '{s}'"));
    let g = match layout {
        Layout::Ula => make_ula(parse(n)?, d0)?,
        Layout::Nested => make_nested_best_split(parse(n)?, d0)?,
        Layout::Mra => make_mra(parse(n)?, d0)?,
        Layout::Coprime => {
            let Some((m, nc)) = n.split_once(',') else {
                bail!("coprime layouts take --n M,Nc");
            };
            make_coprime(parse(m)?, parse(nc)?, d0)?
        }
    };
    Ok(g)
}

fn analyze(a: &AnalyzeArgs, out: &mut impl Write) -> Result<()> {
    let geom = match (&a.geometry, a.array) {
        (Some(p), _) => read_geometry(p)?,
        (None, Some(layout)) => builtin(layout, a.n.as_deref().unwrap_or_default(), a.wavelength / 2.0)?,
        (None, None) => bail!("pass --geometry FILE or --array KIND --n N"),
    };
    let d0 = geom.d0();
    let coarray = difference_coarray(&geom, DifferenceCoarray::default_tol_grid(d0));
    let lags: Vec<String> = coarray
        .lag_values()
        .filter(|v| *v >= 0.0)
        .map(|v| format!("{}", (v / d0 * 1e6).round() / 1e6))
        .collect();
    let bound = dual_dof_bound(geom.len(), geom.aperture(), d0)?;
    writeln!(out, "n_elements,aperture_d0,lags_d0,m_c,dof,dual_bound")?;
    writeln!(
        out,
        "{},{},{},{},{},{}",
        geom.len(),
        geom.aperture() / d0,
        lags.join(";"),
        coarray.contiguous_half_length(),
        coarray_dof(&coarray),
        bound
    )?;
    Ok(())
}

fn crb(a: &CrbArgs, out: &mut impl Write) -> Result<()> {
    let scenario = a.scenario.scenario()?;
    let d0 = a.scenario.wavelength / 2.0;
    let mut layouts: Vec<(String, ArrayGeometry)> = Vec::new();
    for (name, g) in [
        ("ula", make_ula(a.n_antennas, d0)),
        ("nested", make_nested_best_split(a.n_antennas, d0)),
        ("mra", make_mra(a.n_antennas, d0)),
    ] {
        match g {
            Ok(g) => layouts.push((name.to_string(), g)),
            Err(e) => eprintln!("skipping {name}: {e}"),
        }
    }
    let config = DesignConfig::new(a.scenario.wavelength);
    for &dd in &a.aperture_d0 {
        match design_positions(&scenario, a.n_antennas, dd * d0, &config) {
            Ok(o) => layouts.push(("fas".into(), o.geometry)),
            Err(e) => eprintln!("skipping fas at D = {dd} d0: {e}"),
        }
    }
    for p in &a.geometry {
        layouts.push((p.display().to_string(), read_geometry(p)?));
    }
    writeln!(out, "aperture_over_d0,array_type,source_index,sqrt_crb_degrees")?;
    for (name, g) in &layouts {
        match fim_exact(g, &scenario).and_then(|f| sqrt_crb_degrees(&f)) {
            Ok(values) => {
                for (i, v) in values.iter().enumerate() {
                    writeln!(out, "{},{},{},{:.9e}", g.aperture() / g.d0(), name, i, v)?;
                }
            }
            Err(e) => eprintln!("{name}: {e}"),
        }
    }
    Ok(())
}

fn design(a: &DesignArgs, out: &mut impl Write) -> Result<()> {
    let scenario = a.scenario.scenario()?;
    let mut config = DesignConfig::new(a.scenario.wavelength);
    config.epsilon = a.epsilon;
    config.d_min = a.d_min_d0 * config.d0();
    config.refine_coarray = !a.no_refine;
    let aperture = a.aperture_d0 * config.d0();
    let outcome = design_positions(&scenario, a.n_antennas, aperture, &config)?;
    if let Some(path) = &a.out {
        fs::write(path, outcome.geometry.to_json()?).with_context(|| format!("writing {}", path.display()))?;
    }
    let d0 = config.d0();
    let report = json!({
        "positions_d0": outcome.geometry.positions().iter().map(|p| p / d0).collect::<Vec<_>>(),
        "kw_gap": outcome.measure.kw_gap,
        "iterations": outcome.measure.iterations_used,
        "log_det_fim": outcome.log_det,
        "contiguous_dof": outcome.dof,
        "seed": a.seed,
        "geometry_file": a.out.as_ref().map(|p| p.display().to_string()),
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

fn estimate(a: &EstimateArgs, out: &mut impl Write) -> Result<()> {
    let geom = read_geometry(&a.geometry)?;
    let scenario = a.scenario.scenario()?;
    let l = scenario.num_sources();
    let config = EstimatorConfig {
        grid_step_deg: a.grid_step_deg,
        delta_deg: a.delta_deg,
    };
    let mut final_geometry = None;
    let result = match a.algorithm {
        AlgorithmArg::Music => music_estimate(&sample_covariance(&synthesize_snapshots(&geom, &scenario, a.seed)), &geom, l, a.grid_step_deg)?,
        AlgorithmArg::CoarrayMusic => coarray_music(&sample_covariance(&synthesize_snapshots(&geom, &scenario, a.seed)), &geom, l, a.grid_step_deg)?,
        AlgorithmArg::FasMusic => fas_music(&synthesize_snapshots(&geom, &scenario, a.seed), &geom, l, &config)?,
        AlgorithmArg::Adaptive => {
            let mut step = 0u64;
            let source = |g: &ArrayGeometry| {
                let s = derive_seed(a.seed, step);
                step += 1;
                Ok(synthesize_snapshots(g, &scenario, s))
            };
            let design = DesignConfig::new(geom.wavelength());
            let o = adaptive_fas_music(source, geom.len(), geom.aperture(), l, a.k_adapt, &design, &config)?;
            final_geometry = Some((o.geometry, o.design_failures));
            o.result
        }
    };
    if let Some(path) = &a.dump_spectrum {
        let Some(spectrum) = &result.spectrum else {
            bail!("this estimator produced no spectrum");
        };
        let mut text = String::from("angle_deg,value\n");
        for (t, v) in spectrum.angles_deg.iter().zip(&spectrum.values) {
            text.push_str(&format!("{t},{v:.9e}\n"));
        }
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut report = json!({
        "truth_deg": scenario.doas_deg(),
        "theta_hat_deg": result.theta_hat_deg(),
        "theta_coarse_deg": result.theta_coarse_deg(),
        "diagnostics": result.diagnostics,
    });
    if let Some((g, failures)) = final_geometry {
        report["final_positions_d0"] = json!(g.positions().iter().map(|p| p / g.d0()).collect::<Vec<_>>());
        report["design_failures"] = json!(failures);
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

fn experiment(a: &ExperimentArgs, out: &mut impl Write) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ExperimentConfig::desk(&a.name),
    };
    config.experiment = a.name.clone();
    if let Some(t) = a.trials {
        config.trials = t;
    }
    if let Some(s) = a.seed {
        config.master_seed = s;
    }
    config.output = Some(a.out.display().to_string());
    config.validate()?;
    let (output, written) = run_experiment(&config, &a.out)?;
    let errors = output.table.rows.iter().filter(|r| r.error.is_some()).count();
    writeln!(out, "{} rows ({errors} with errors)", output.table.rows.len())?;
    for p in written {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}
