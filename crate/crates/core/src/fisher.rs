//! Fisher information and Cramér-Rao bounds for DOA estimation, including the
//! measure-relaxed information used by position design.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::design::DesignMeasure;
use crate::error::{invalid, Error, Result};
use crate::geometry::{central_moments, ArrayGeometry};
use crate::linalg::{cis, hermitian_condition, symmetric_eigenvalues, CMatrix};
use crate::signal::SourceScenario;

/// Above this condition number a Fisher or Gram matrix counts as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Real symmetric `L × L` Fisher information for the source directions.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherInfo {
    pub matrix: DMatrix<f64>,
    pub doas: Vec<f64>,
}

impl FisherInfo {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `log det F`, or `-∞` when `F` is not positive definite.
    pub fn log_det(&self) -> f64 {
        log_det_spd(&self.matrix)
    }

    pub fn condition(&self) -> f64 {
        let ev = symmetric_eigenvalues(&self.matrix);
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }
}

pub(crate) fn log_det_spd(m: &DMatrix<f64>) -> f64 {
    match m.clone().cholesky() {
        Some(c) => 2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
        None => f64::NEG_INFINITY,
    }
}

/// Orthogonal projector onto the complement of the columns of `a`.
pub(crate) fn orthogonal_projector(a: &CMatrix) -> Result<CMatrix> {
    let gram = a.adjoint() * a;
    if hermitian_condition(&gram) > SINGULAR_CONDITION {
        return Err(Error::DegenerateConfiguration(
            "steering matrix is rank deficient (directions not separable on this geometry)".into(),
        ));
    }
    let inv = gram
        .cholesky()
        .ok_or_else(|| Error::DegenerateConfiguration("steering Gram matrix is not positive definite".into()))?
        .inverse();
    let n = a.nrows();
    Ok(CMatrix::identity(n, n) - a * inv * a.adjoint())
}

/// Exact Fisher information from raw positions (meters).
pub fn fim_exact_positions(positions: &[f64], wavelength: f64, scenario: &SourceScenario) -> Result<DMatrix<f64>> {
    let n = positions.len();
    let l = scenario.num_sources();
    if l >= n {
        return Err(invalid(format!("{l} sources need more than {n} elements")));
    }
    if !(scenario.noise_power() > 0.0) {
        return Err(invalid("Fisher information needs a positive noise power"));
    }
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let doas = scenario.doas();
    // F is invariant to a common shift; centring keeps the derivative
    // columns small so translated copies agree to rounding
    let mean = positions.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = positions.iter().map(|x| x - mean).collect();
    let a = CMatrix::from_fn(n, l, |r, c| cis(k * centred[r] * doas[c].sin()));
    let d = CMatrix::from_fn(n, l, |r, c| {
        let (s, co) = doas[c].sin_cos();
        Complex64::new(0.0, k * centred[r] * co) * cis(k * centred[r] * s)
    });
    let proj = orthogonal_projector(&a)?;
    let core = d.adjoint() * proj * &d;
    let scale = 2.0 * scenario.snapshots() as f64 / scenario.noise_power();
    // R_s is diagonal, so only the diagonal of the Hadamard product survives
    let p = scenario.powers();
    // projected energy at rounding level relative to the raw derivative is zero
    let raw: Vec<f64> = (0..l).map(|i| d.column(i).norm_squared()).collect();
    let projected = |i: usize| {
        let v = core[(i, i)].re;
        if v <= 1e-12 * raw[i] {
            0.0
        } else {
            v
        }
    };
    let mut f = DMatrix::from_fn(l, l, |i, j| if i == j { scale * projected(i) * p[i] } else { 0.0 });
    f = (&f + f.transpose()) * 0.5;
    Ok(f)
}

/// `F = (2 N_p / σ²) · Re{Dᴴ Π⊥_A D ⊙ R_sᵀ}` with `R_s = diag(P_ℓ)`.
pub fn fim_exact(geom: &ArrayGeometry, scenario: &SourceScenario) -> Result<FisherInfo> {
    Ok(FisherInfo {
        matrix: fim_exact_positions(geom.positions(), geom.wavelength(), scenario)?,
        doas: scenario.doas().to_vec(),
    })
}

/// Single-source Fisher information
/// `(2 N_p P / σ²)(4π² cos²θ / λ²) · N · μ₂`.
pub fn fim_single_source(geom: &ArrayGeometry, scenario: &SourceScenario) -> Result<f64> {
    if scenario.num_sources() != 1 {
        return Err(invalid(format!(
            "single-source information needs L = 1, got {}",
            scenario.num_sources()
        )));
    }
    if !(scenario.noise_power() > 0.0) {
        return Err(invalid("Fisher information needs a positive noise power"));
    }
    let mu2 = central_moments(geom.positions(), 2)?[0];
    let theta = scenario.doas()[0];
    let snr = scenario.powers()[0] / scenario.noise_power();
    let k = geom.wavenumber();
    Ok(2.0 * scenario.snapshots() as f64 * snr * k * k * theta.cos().powi(2) * geom.len() as f64 * mu2)
}

/// Per-source variance bounds, the diagonal of `F⁻¹` (radians²).
pub fn crb(f: &FisherInfo) -> Result<Vec<f64>> {
    let cond = f.condition();
    if !(cond <= SINGULAR_CONDITION) {
        return Err(Error::UnidentifiableConfiguration(format!(
            "Fisher information is singular (condition number {cond:.3e})"
        )));
    }
    let inv = f
        .matrix
        .clone()
        .cholesky()
        .ok_or_else(|| Error::UnidentifiableConfiguration("Fisher information is not positive definite".into()))?
        .inverse();
    Ok(inv.diagonal().iter().copied().collect())
}

/// `√CRB` per source, in degrees.
pub fn sqrt_crb_degrees(f: &FisherInfo) -> Result<Vec<f64>> {
    Ok(crb(f)?.into_iter().map(|v| v.sqrt().to_degrees()).collect())
}

/// Per-position information vector
/// `g_ℓ(p) = (2π/λ) cosθ_ℓ (p − c) e^{j(2π/λ) p sinθ_ℓ}`.
pub fn information_vector(p: f64, center: f64, wavelength: f64, doas: &[f64]) -> Vec<Complex64> {
    let k = 2.0 * std::f64::consts::PI / wavelength;
    doas.iter()
        .map(|t| {
            let (s, c) = t.sin_cos();
            cis(k * p * s) * (k * c * (p - center))
        })
        .collect()
}

/// Information contributed by one unit of measure at `p`:
/// `N (2 N_p / σ²) Re{g gᴴ ⊙ R_sᵀ}`. Integrating it against the measure
/// gives [`fim_measure`].
pub fn information_density(
    p: f64,
    center: f64,
    wavelength: f64,
    scenario: &SourceScenario,
    n_elements: usize,
) -> DMatrix<f64> {
    let g = information_vector(p, center, wavelength, scenario.doas());
    let scale = n_elements as f64 * 2.0 * scenario.snapshots() as f64 / scenario.noise_power();
    let pw = scenario.powers();
    let l = g.len();
    DMatrix::from_fn(l, l, |i, j| if i == j { scale * g[i].norm_sqr() * pw[i] } else { 0.0 })
}

/// Measure-relaxed information `N (2 N_p / σ²) Re{∫ g gᴴ dξ ⊙ R_sᵀ}` with
/// `g` centered at the measure mean.
pub fn fim_measure(xi: &DesignMeasure, scenario: &SourceScenario, n_elements: usize) -> Result<FisherInfo> {
    if xi.atoms.is_empty() {
        return Err(invalid("design measure has no atoms"));
    }
    if !(scenario.noise_power() > 0.0) {
        return Err(invalid("Fisher information needs a positive noise power"));
    }
    let c = xi.mean();
    let l = scenario.num_sources();
    let mut f = DMatrix::zeros(l, l);
    for &(p, w) in &xi.atoms {
        f += information_density(p, c, xi.wavelength, scenario, n_elements) * w;
    }
    Ok(FisherInfo {
        matrix: f,
        doas: scenario.doas().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_ula;

    fn scenario(doas_deg: &[f64]) -> SourceScenario {
        SourceScenario::equal_power_deg(doas_deg, 10.0, 500).unwrap()
    }

    #[test]
    fn endpoints_closed_form() {
        let (lambda, d) = (1.0, 20.0);
        let g = ArrayGeometry::new(vec![0.0, d], lambda, d).unwrap();
        let s = SourceScenario::new(vec![0.0], vec![3.0], 1.5, 100).unwrap();
        let expect = (2.0 * 100.0 * 2.0) * (4.0 * std::f64::consts::PI.powi(2)) * 2.0 * (d * d / 4.0);
        let f = fim_single_source(&g, &s).unwrap();
        assert!((f - expect).abs() <= 1e-12 * expect);
        let exact = fim_exact(&g, &s).unwrap();
        assert!((exact.matrix[(0, 0)] - expect).abs() <= 1e-10 * expect);
    }

    #[test]
    fn colocated_elements_carry_no_information() {
        let g = ArrayGeometry::new(vec![1.0, 1.0, 1.0], 1.0, 2.0).unwrap();
        assert_eq!(fim_single_source(&g, &scenario(&[20.0])).unwrap(), 0.0);
        let f = fim_exact(&g, &scenario(&[20.0])).unwrap();
        assert!(crb(&f).is_err());
    }

    #[test]
    fn endfire_blindness() {
        let g = make_ula(4, 0.5).unwrap();
        let near = SourceScenario::equal_power_deg(&[89.999], 10.0, 10).unwrap();
        let broad = SourceScenario::equal_power_deg(&[0.0], 10.0, 10).unwrap();
        assert!(fim_single_source(&g, &near).unwrap() < 1e-8 * fim_single_source(&g, &broad).unwrap());
    }

    #[test]
    fn wrong_source_count_and_degenerate_angles() {
        let g = make_ula(4, 0.5).unwrap();
        assert!(fim_single_source(&g, &scenario(&[0.0, 10.0])).is_err());
        let close = SourceScenario::new(vec![0.2, 0.2 + 1e-9], vec![1.0, 1.0], 1.0, 10).unwrap();
        assert!(matches!(fim_exact(&g, &close), Err(Error::DegenerateConfiguration(_))));
        let many = scenario(&[-40.0, -10.0, 10.0, 40.0]);
        assert!(fim_exact(&g, &many).is_err());
    }

    #[test]
    fn crb_of_scalar_is_reciprocal() {
        let g = make_ula(6, 0.5).unwrap();
        let f = fim_exact(&g, &scenario(&[5.0])).unwrap();
        let c = crb(&f).unwrap();
        assert!((c[0] * f.matrix[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measure_with_one_atom_is_zero() {
        let xi = DesignMeasure::new(vec![(3.0, 1.0)], 1.0, 10.0).unwrap();
        let f = fim_measure(&xi, &scenario(&[10.0, 30.0]), 6).unwrap();
        assert_eq!(f.matrix, DMatrix::zeros(2, 2));
    }

    #[test]
    fn measure_on_endpoints_matches_scalar() {
        let d = 20.0;
        let xi = DesignMeasure::new(vec![(0.0, 0.5), (d, 0.5)], 1.0, d).unwrap();
        let s = scenario(&[17.0]);
        let fm = fim_measure(&xi, &s, 2).unwrap().matrix[(0, 0)];
        let g = ArrayGeometry::new(vec![0.0, d], 1.0, d).unwrap();
        let fs = fim_single_source(&g, &s).unwrap();
        assert!((fm - fs).abs() <= 1e-10 * fs);
    }

    #[test]
    fn uniform_measure_has_uniform_variance() {
        let d = 10.0;
        let m = 4001;
        let atoms = (0..m).map(|i| (d * i as f64 / (m - 1) as f64, 1.0 / m as f64)).collect();
        let xi = DesignMeasure::new(atoms, 1.0, d).unwrap();
        let s = scenario(&[0.0]);
        let f = fim_measure(&xi, &s, 4).unwrap().matrix[(0, 0)];
        let k = 2.0 * std::f64::consts::PI;
        // discrete uniform grid variance: D²/12 · (m+1)/(m-1)
        let var = d * d / 12.0 * (m + 1) as f64 / (m - 1) as f64;
        let expect = 4.0 * 2.0 * 500.0 * 10.0 * k * k * var;
        assert!((f - expect).abs() < 1e-10 * expect);
    }
}
