use super::{DesignConfig, DesignMeasure};
use crate::error::{invalid, Error, Result};
use crate::fisher::{fim_measure, FisherInfo, SINGULAR_CONDITION};
use crate::optimize::golden_section_max;
use crate::signal::SourceScenario;

const INITIAL_ATOMS: usize = 64;
const PRUNE_WEIGHT: f64 = 1e-6;

/// One Frank-Wolfe iteration as seen by a logging callback.
#[derive(Debug, Clone, PartialEq)]
pub struct FrankWolfeLog {
    pub iteration: usize,
    pub phi_max: f64,
    pub argmax: f64,
    /// `∫ φ dξ` at the iterate; equals `L` up to rounding.
    pub phi_integral: f64,
    pub weight_sum: f64,
    pub atoms: usize,
}

/// Precomputed pieces of `φ(p) = tr(F⁻¹(ξ) h(p))` for a fixed iterate.
struct Derivative {
    center: f64,
    /// Coefficient multiplying `(p − c)²` in `φ`.
    coeff: f64,
}

impl Derivative {
    fn new(f: &FisherInfo, xi: &DesignMeasure, scenario: &SourceScenario, n_elements: usize) -> Result<Self> {
        if !(f.condition() <= SINGULAR_CONDITION) {
            return Err(Error::DegenerateConfiguration(
                "measure-relaxed Fisher information is singular".into(),
            ));
        }
        let inv = f
            .matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::DegenerateConfiguration("measure-relaxed Fisher information is singular".into()))?;
        let k = 2.0 * std::f64::consts::PI / xi.wavelength;
        let scale = n_elements as f64 * 2.0 * scenario.snapshots() as f64 / scenario.noise_power();
        // with R_s diagonal, h(p) is diagonal and |g_ℓ(p)|² = k² cos²θ_ℓ (p − c)²
        let coeff = scenario
            .doas()
            .iter()
            .zip(scenario.powers())
            .enumerate()
            .map(|(l, (t, pw))| inv[(l, l)] * scale * pw * (k * t.cos()).powi(2))
            .sum();
        Ok(Self {
            center: xi.mean(),
            coeff,
        })
    }

    fn phi(&self, p: f64) -> f64 {
        self.coeff * (p - self.center).powi(2)
    }
}

/// `φ(p) = tr(F⁻¹(ξ) h(p))`, the directional derivative of `log det F` toward
/// a point mass at `p`, with `h` the information density of `p`.
pub fn directional_derivative(xi: &DesignMeasure, p: f64, scenario: &SourceScenario, n_elements: usize) -> Result<f64> {
    let f = fim_measure(xi, scenario, n_elements)?;
    Ok(Derivative::new(&f, xi, scenario, n_elements)?.phi(p))
}

/// General form of [`directional_derivative`] that evaluates the full
/// information density matrix; used to cross-check the fast path.
#[cfg(test)]
pub(crate) fn directional_derivative_dense(xi: &DesignMeasure, p: f64, scenario: &SourceScenario, n_elements: usize) -> Result<f64> {
    let f = fim_measure(xi, scenario, n_elements)?;
    let inv: nalgebra::DMatrix<f64> = f.matrix.try_inverse().ok_or_else(|| Error::DegenerateConfiguration("singular".into()))?;
    let h = crate::fisher::information_density(p, xi.mean(), xi.wavelength, scenario, n_elements);
    Ok((inv * h).trace())
}

fn argmax_phi(d: &Derivative, aperture: f64, step: f64) -> (f64, f64) {
    let count = (aperture / step).floor() as usize;
    let mut best = (0.0, d.phi(0.0));
    for i in 1..=count + 1 {
        let p = if i > count { aperture } else { i as f64 * step };
        let v = d.phi(p);
        if v > best.1 {
            best = (p, v);
        }
    }
    let lo = (best.0 - step).max(0.0);
    let hi = (best.0 + step).min(aperture);
    let refined = golden_section_max(|p| d.phi(p), lo, hi, 1e-6 * step);
    if refined.1 > best.1 {
        refined
    } else {
        best
    }
}

fn add_atom(xi: &mut DesignMeasure, p: f64, gamma: f64, merge_radius: f64) {
    for a in xi.atoms.iter_mut() {
        a.1 *= 1.0 - gamma;
    }
    let nearest = xi
        .atoms
        .iter()
        .enumerate()
        .map(|(i, a)| (i, (a.0 - p).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    match nearest {
        Some((i, dist)) if dist <= merge_radius => {
            let (q, w) = xi.atoms[i];
            let total = w + gamma;
            xi.atoms[i] = ((q * w + p * gamma) / total, total);
        }
        _ => xi.atoms.push((p, gamma)),
    }
    xi.atoms.retain(|a| a.1 >= PRUNE_WEIGHT);
    let total = xi.total_weight();
    for a in xi.atoms.iter_mut() {
        a.1 /= total;
    }
    xi.atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
}

fn integral_of_phi(d: &Derivative, xi: &DesignMeasure) -> f64 {
    xi.atoms.iter().map(|&(p, w)| w * d.phi(p)).sum()
}

/// D-optimal design over measures on `[0, D]` by Frank-Wolfe with step
/// `γ_t = 2/(t+2)`, stopping once `max φ ≤ L + ε`.
pub fn frank_wolfe_design(scenario: &SourceScenario, n: usize, aperture: f64, config: &DesignConfig) -> Result<DesignMeasure> {
    frank_wolfe_design_logged(scenario, n, aperture, config, |_| {})
}

/// [`frank_wolfe_design`] that reports every iteration to `log`.
pub fn frank_wolfe_design_logged<F: FnMut(&FrankWolfeLog)>(
    scenario: &SourceScenario,
    n: usize,
    aperture: f64,
    config: &DesignConfig,
    mut log: F,
) -> Result<DesignMeasure> {
    config.validate()?;
    if !(aperture > 0.0 && aperture.is_finite()) {
        return Err(invalid(format!("D must be positive, got {aperture}")));
    }
    if n < 2 {
        return Err(invalid(format!("N must be >= 2, got {n}")));
    }
    let l = scenario.num_sources() as f64;
    let merge_radius = config.d0() / 100.0;

    let mut xi = DesignMeasure::uniform(INITIAL_ATOMS, config.wavelength, aperture);
    let mut f = fim_measure(&xi, scenario, n)?;
    if !(f.condition() <= SINGULAR_CONDITION) {
        let mut atoms: Vec<(f64, f64)> = xi.atoms.iter().map(|&(p, w)| (p, 0.5 * w)).collect();
        atoms[0].1 += 0.25;
        atoms[INITIAL_ATOMS - 1].1 += 0.25;
        xi.atoms = atoms;
        f = fim_measure(&xi, scenario, n)?;
    }

    for t in 1..=config.t_max {
        let d = Derivative::new(&f, &xi, scenario, n)?;
        let (p_star, phi_star) = argmax_phi(&d, aperture, config.grid_resolution);
        log(&FrankWolfeLog {
            iteration: t,
            phi_max: phi_star,
            argmax: p_star,
            phi_integral: integral_of_phi(&d, &xi),
            weight_sum: xi.total_weight(),
            atoms: xi.atoms.len(),
        });
        xi.kw_gap = phi_star - l;
        xi.iterations_used = t;
        if phi_star <= l + config.epsilon {
            return Ok(xi);
        }
        let gamma = 2.0 / (t as f64 + 2.0);
        add_atom(&mut xi, p_star, gamma, merge_radius);
        f = fim_measure(&xi, scenario, n)?;
    }
    let d = Derivative::new(&f, &xi, scenario, n)?;
    xi.kw_gap = argmax_phi(&d, aperture, config.grid_resolution).1 - l;
    Ok(xi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(doas: &[f64]) -> SourceScenario {
        SourceScenario::equal_power_deg(doas, 10.0, 500).unwrap()
    }

    #[test]
    fn fast_and_dense_derivatives_agree() {
        let xi = DesignMeasure::new(vec![(0.0, 0.2), (3.3, 0.5), (10.0, 0.3)], 1.0, 10.0).unwrap();
        let s = scenario(&[10.0, 25.0, 40.0]);
        for p in [0.0, 1.7, 5.0, 9.9] {
            let a = directional_derivative(&xi, p, &s, 6).unwrap();
            let b = directional_derivative_dense(&xi, p, &s, 6).unwrap();
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} vs {b}");
            assert!(a >= 0.0);
        }
    }

    #[test]
    fn trace_identity_on_every_iteration() {
        let mut c = DesignConfig::new(1.0);
        c.t_max = 300;
        let s = scenario(&[10.0, 25.0]);
        let mut worst: f64 = 0.0;
        let xi = frank_wolfe_design_logged(&s, 6, 20.0, &c, |log| {
            worst = worst.max((log.phi_integral - 2.0).abs());
            assert!((log.weight_sum - 1.0).abs() < 1e-10);
        })
        .unwrap();
        assert!(worst < 1e-8, "{worst}");
        assert!(xi.atoms.iter().all(|a| a.1 >= 0.0 && a.0 >= 0.0 && a.0 <= 20.0));
    }

    #[test]
    fn loose_tolerance_stops_immediately() {
        let mut c = DesignConfig::new(1.0);
        c.epsilon = 10.0;
        let xi = frank_wolfe_design(&scenario(&[0.0]), 4, 5.0, &c).unwrap();
        assert_eq!(xi.iterations_used, 1);
        assert_eq!(xi.atoms.len(), INITIAL_ATOMS);
        assert!(xi.kw_gap <= 10.0);
    }

    #[test]
    fn single_source_mass_moves_to_endpoints() {
        let c = DesignConfig::new(1.0);
        let d = 20.0;
        let xi = frank_wolfe_design(&scenario(&[20.0]), 6, d, &c).unwrap();
        assert!(xi.kw_gap <= 1e-3, "gap {}", xi.kw_gap);
        let near_ends: f64 = xi
            .atoms
            .iter()
            .filter(|a| a.0 <= 0.01 * d || a.0 >= 0.99 * d)
            .map(|a| a.1)
            .sum();
        assert!(near_ends >= 0.98, "{near_ends}");
    }
}
