//! Antenna position design: the closed-form single-source layout, Frank-Wolfe
//! over probability measures on `[0, D]`, rounding to `N` positions, a
//! spacing-penalized polish against the exact Fisher information, and a
//! coarray-aware local search.

mod extract;
mod frank_wolfe;
mod refine;

pub use extract::{enforce_spacing, extract_positions, polish, spacing_penalty, spacing_penalty_gradient, spacing_penalized_objective};
pub use frank_wolfe::{directional_derivative, frank_wolfe_design, frank_wolfe_design_logged, FrankWolfeLog};
pub use refine::{coarray_objective, coarray_refine, dof_loss_from_spacing, DofLoss};

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::fisher::fim_exact;
use crate::geometry::{coarray_dof, difference_coarray, ArrayGeometry, DifferenceCoarray};
use crate::signal::SourceScenario;

/// Tuning for [`design_positions`] and its stages. Lengths are meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignConfig {
    pub wavelength: f64,
    /// Kiefer-Wolfowitz tolerance on `max φ − L`.
    pub epsilon: f64,
    pub t_max: usize,
    pub d_min: f64,
    pub mu_sp: f64,
    pub mu_coarray: f64,
    /// Candidate-scan step for the argmax of `φ`.
    pub grid_resolution: f64,
    /// Run [`coarray_refine`] after the polish.
    pub refine_coarray: bool,
}

impl DesignConfig {
    /// Defaults: `ε = 10⁻³`, `T_max = 20000`, `d_min = 0.4·d0`, `μ_sp = 10⁸`,
    /// `μ_coarray = 0.1`, scan step `d0/50`, coarray refinement on.
    pub fn new(wavelength: f64) -> Self {
        let d0 = wavelength / 2.0;
        Self {
            wavelength,
            epsilon: 1e-3,
            t_max: 20_000,
            d_min: 0.4 * d0,
            mu_sp: 1e8,
            mu_coarray: 0.1,
            grid_resolution: d0 / 50.0,
            refine_coarray: true,
        }
    }

    pub fn d0(&self) -> f64 {
        self.wavelength / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(invalid(format!("wavelength must be positive, got {}", self.wavelength)));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.d_min >= 0.0 && self.d_min.is_finite()) {
            return Err(invalid(format!("d_min must be nonnegative, got {}", self.d_min)));
        }
        if !(self.grid_resolution > 0.0) {
            return Err(invalid(format!("grid resolution must be positive, got {}", self.grid_resolution)));
        }
        if !(self.mu_sp >= 0.0 && self.mu_coarray >= 0.0) {
            return Err(invalid("penalty weights must be nonnegative"));
        }
        if self.t_max == 0 {
            return Err(invalid("T_max must be at least 1"));
        }
        Ok(())
    }
}

/// Probability measure on `[0, D]` as weighted atoms, with the last
/// Kiefer-Wolfowitz gap and the iteration count that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignMeasure {
    pub atoms: Vec<(f64, f64)>,
    pub kw_gap: f64,
    pub iterations_used: usize,
    pub wavelength: f64,
    pub aperture: f64,
}

impl DesignMeasure {
    /// Validates atoms (positions inside `[0, D]`, weights nonnegative with
    /// unit sum) and sorts them by position.
    pub fn new(mut atoms: Vec<(f64, f64)>, wavelength: f64, aperture: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(invalid("a design measure needs at least one atom"));
        }
        let slack = 1e-12 * aperture.max(1.0);
        if atoms.iter().any(|&(p, w)| !(p >= -slack && p <= aperture + slack) || !(w >= 0.0)) {
            return Err(invalid("atoms must lie in [0, D] with nonnegative weight"));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(invalid(format!("atom weights sum to {total}, expected 1")));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            atoms,
            kw_gap: f64::INFINITY,
            iterations_used: 0,
            wavelength,
            aperture,
        })
    }

    /// `n` equal-weight atoms at `i·D/(n−1)`.
    pub fn uniform(n: usize, wavelength: f64, aperture: f64) -> Self {
        let atoms = (0..n)
            .map(|i| (aperture * i as f64 / (n - 1).max(1) as f64, 1.0 / n as f64))
            .collect();
        Self {
            atoms,
            kw_gap: f64::INFINITY,
            iterations_used: 0,
            wavelength,
            aperture,
        }
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(p, w)| p * w).sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }
}

/// Two-endpoint layout maximizing `μ₂` for a single source.
///
/// Even `N` splits evenly; odd `N` puts `(N+1)/2` elements at 0 and
/// `(N−1)/2` at `D`, giving `μ₂ = D²/4·(1 − 1/N²)`.
pub fn single_source_optimal(n: usize, aperture: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(invalid(format!("N must be >= 2, got {n}")));
    }
    if !(aperture > 0.0) {
        return Err(invalid(format!("D must be positive, got {aperture}")));
    }
    let low = n.div_ceil(2);
    Ok((0..n).map(|i| if i < low { 0.0 } else { aperture }).collect())
}

/// Outcome of the full design pipeline.
#[derive(Debug, Clone)]
pub struct DesignOutcome {
    pub geometry: ArrayGeometry,
    pub measure: DesignMeasure,
    pub log_det: f64,
    pub dof: usize,
}

impl DesignOutcome {
    pub fn coarray(&self) -> DifferenceCoarray {
        difference_coarray(&self.geometry, DifferenceCoarray::default_tol_grid(self.geometry.d0()))
    }
}

/// Frank-Wolfe, extraction, polish, and (optionally) coarray refinement.
pub fn design_positions(scenario: &SourceScenario, n: usize, aperture: f64, config: &DesignConfig) -> Result<DesignOutcome> {
    config.validate()?;
    let measure = frank_wolfe_design(scenario, n, aperture, config)?;
    let extracted = extract_positions(&measure, n, config.d_min)?;
    let mut positions = polish(&extracted, scenario, aperture, config)?;
    if config.refine_coarray {
        positions = coarray_refine(&positions, scenario, aperture, config.wavelength, config.mu_coarray, config.d_min)?;
    }
    let geometry = ArrayGeometry::new(positions, config.wavelength, aperture)?;
    let log_det = fim_exact(&geometry, scenario)?.log_det();
    let dof = coarray_dof(&difference_coarray(&geometry, DifferenceCoarray::default_tol_grid(geometry.d0())));
    Ok(DesignOutcome {
        geometry,
        measure,
        log_det,
        dof,
    })
}

/// Smallest pairwise distance of a position list.
pub fn min_spacing(positions: &[f64]) -> f64 {
    let mut p = positions.to_vec();
    p.sort_by(f64::total_cmp);
    p.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::central_moments;

    #[test]
    fn single_source_layouts() {
        let d0 = 0.5;
        let p = single_source_optimal(6, 40.0 * d0).unwrap();
        assert_eq!(p, vec![0.0, 0.0, 0.0, 20.0, 20.0, 20.0]);
        assert!((central_moments(&p, 2).unwrap()[0] - 400.0 * d0 * d0).abs() < 1e-12);
        assert_eq!(single_source_optimal(2, 3.0).unwrap(), vec![0.0, 3.0]);
        let p5 = single_source_optimal(5, 1.0).unwrap();
        assert!((central_moments(&p5, 2).unwrap()[0] - 0.25 * (1.0 - 1.0 / 25.0)).abs() < 1e-15);
        assert!(single_source_optimal(1, 1.0).is_err());
    }

    #[test]
    fn measure_validation() {
        assert!(DesignMeasure::new(vec![], 1.0, 1.0).is_err());
        assert!(DesignMeasure::new(vec![(0.0, 0.6), (1.0, 0.6)], 1.0, 1.0).is_err());
        assert!(DesignMeasure::new(vec![(2.0, 1.0)], 1.0, 1.0).is_err());
        let m = DesignMeasure::new(vec![(1.0, 0.25), (0.0, 0.75)], 1.0, 1.0).unwrap();
        assert_eq!(m.atoms[0].0, 0.0);
        assert!((m.mean() - 0.25).abs() < 1e-15);
        let u = DesignMeasure::uniform(64, 1.0, 20.0);
        assert!((u.total_weight() - 1.0).abs() < 1e-12);
        assert_eq!(u.atoms[63].0, 20.0);
    }

    #[test]
    fn config_defaults() {
        let c = DesignConfig::new(1.0);
        assert!(c.validate().is_ok());
        assert!((c.d_min - 0.2).abs() < 1e-15);
        let mut bad = c.clone();
        bad.epsilon = 0.0;
        assert!(bad.validate().is_err());
    }
}
