//! DOA estimators: MUSIC on the physical array, coarray MUSIC with spatial
//! smoothing, bounded local ML refinement, their two-stage combination, and
//! the adaptive design/estimate loop.

mod ml;
mod music;

pub use ml::{local_ml_refine, ml_gradient, ml_objective, MlRefinement};
pub use music::{coarray_music, music_estimate, scan_grid, smoothed_coarray_covariance};

use serde::Serialize;

use crate::design::{design_positions, DesignConfig};
use crate::error::{invalid, Result};
use crate::geometry::ArrayGeometry;
use crate::signal::{sample_covariance, SnapshotData, SourceScenario};

/// Sampled pseudo-spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub angles_deg: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Contiguous coarray half-length used by the coarray stage.
    pub m_c: Option<usize>,
    /// Smoothing subarray size.
    pub m_s: Option<usize>,
    pub ml_iterations: usize,
    pub converged: bool,
    pub ml_objective: Option<f64>,
    pub ml_objective_coarse: Option<f64>,
}

/// Sorted DOA estimates (radians) with the coarse stage and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub theta_hat: Vec<f64>,
    pub theta_coarse: Vec<f64>,
    pub spectrum: Option<Spectrum>,
    pub diagnostics: Diagnostics,
}

impl EstimateResult {
    pub fn theta_hat_deg(&self) -> Vec<f64> {
        self.theta_hat.iter().map(|t| t.to_degrees()).collect()
    }

    pub fn theta_coarse_deg(&self) -> Vec<f64> {
        self.theta_coarse.iter().map(|t| t.to_degrees()).collect()
    }
}

/// Estimator settings shared by the two-stage methods.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub grid_step_deg: f64,
    /// ML search box radius, degrees.
    pub delta_deg: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            grid_step_deg: 0.02,
            delta_deg: 5.0,
        }
    }
}

/// Two-stage estimate: coarray MUSIC for disambiguation, then bounded ML
/// refinement in a box of radius `δ` around the coarse estimates.
///
/// If the ML stage fails to converge the coarse estimates are returned with
/// `converged = false`.
pub fn fas_music(data: &SnapshotData, geom: &ArrayGeometry, l: usize, config: &EstimatorConfig) -> Result<EstimateResult> {
    if data.matrix.nrows() != geom.len() {
        return Err(invalid("snapshot rows do not match the geometry"));
    }
    let r = sample_covariance(data);
    let coarse = coarray_music(&r, geom, l, config.grid_step_deg)?;
    let refined = local_ml_refine(&r, geom, &coarse.theta_coarse, config.delta_deg.to_radians())?;
    let mut out = coarse;
    out.diagnostics.ml_iterations = refined.iterations;
    out.diagnostics.ml_objective = Some(refined.objective);
    out.diagnostics.ml_objective_coarse = Some(refined.objective_at_coarse);
    if refined.converged {
        out.theta_hat = refined.theta;
    } else {
        out.diagnostics.converged = false;
    }
    Ok(out)
}

/// Result of the adaptive loop.
#[derive(Debug, Clone)]
pub struct AdaptiveOutcome {
    pub result: EstimateResult,
    pub geometry: ArrayGeometry,
    /// Iterations (1-based) whose re-design failed and kept the previous
    /// geometry.
    pub design_failures: Vec<usize>,
}

/// Starting layout for the adaptive loop: `N` elements at `d0` pitch from 0.
pub fn adaptive_initial_geometry(n: usize, aperture: f64, wavelength: f64) -> Result<ArrayGeometry> {
    let d0 = wavelength / 2.0;
    if (n as f64 - 1.0) * d0 > aperture * (1.0 + 1e-12) {
        return Err(invalid(format!("{n} elements at d0 pitch exceed aperture {aperture}")));
    }
    ArrayGeometry::new((0..n).map(|i| i as f64 * d0).collect(), wavelength, aperture)
}

/// Estimate, re-design positions around the estimate, collect fresh data,
/// and re-estimate, `k` times.
///
/// `data_source` returns snapshots of the (hidden) scenario for a geometry.
pub fn adaptive_fas_music<S>(
    mut data_source: S,
    n: usize,
    aperture: f64,
    l: usize,
    k: usize,
    design: &DesignConfig,
    config: &EstimatorConfig,
) -> Result<AdaptiveOutcome>
where
    S: FnMut(&ArrayGeometry) -> Result<SnapshotData>,
{
    let mut geometry = adaptive_initial_geometry(n, aperture, design.wavelength)?;
    let mut result = fas_music(&data_source(&geometry)?, &geometry, l, config)?;
    let mut failures = Vec::new();
    for iter in 1..=k {
        let redesigned = SourceScenario::new(result.theta_hat.clone(), vec![10.0; l], 1.0, 500)
            .and_then(|s| design_positions(&s, n, aperture, design));
        match redesigned {
            Ok(outcome) => geometry = outcome.geometry,
            Err(_) => failures.push(iter),
        }
        result = fas_music(&data_source(&geometry)?, &geometry, l, config)?;
    }
    Ok(AdaptiveOutcome {
        result,
        geometry,
        design_failures: failures,
    })
}
