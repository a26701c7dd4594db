//! Array geometries on a line: classical grid designs, fluid-antenna
//! placements, their difference coarrays and the universal DOF bound.
//!
//! Positions are stored in meters together with the wavelength and the
//! deployment aperture `D`. The Nyquist spacing `d0 = λ/2` is always derived
//! from the wavelength.

mod coarray;
mod mra;

pub use coarray::{coarray_dof, difference_coarray, DifferenceCoarray, Lag};
pub use mra::{make_mra, mra_exhaustive_search, contiguous_dof_of_integers, MRA_TABLE};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relative slack allowed when checking that positions lie inside `[0, D]`.
const RANGE_SLACK: f64 = 1e-12;

/// Antenna positions inside a deployment region `[0, D]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometryFile", into = "GeometryFile")]
pub struct ArrayGeometry {
    positions: Vec<f64>,
    wavelength: f64,
    aperture: f64,
}

/// On-disk JSON layout: `{"wavelength": .., "aperture": .., "positions": [..]}`.
#[derive(Serialize, Deserialize)]
struct GeometryFile {
    wavelength: f64,
    aperture: f64,
    positions: Vec<f64>,
}

impl TryFrom<GeometryFile> for ArrayGeometry {
    type Error = Error;

    fn try_from(file: GeometryFile) -> Result<Self> {
        ArrayGeometry::new(file.positions, file.wavelength, file.aperture)
    }
}

impl From<ArrayGeometry> for GeometryFile {
    fn from(g: ArrayGeometry) -> Self {
        GeometryFile {
            wavelength: g.wavelength,
            aperture: g.aperture,
            positions: g.positions,
        }
    }
}

impl ArrayGeometry {
    /// Builds a geometry, sorting the positions ascending.
    ///
    /// Requires at least two elements, a positive wavelength, and every
    /// position inside `[0, aperture]`.
    pub fn new(mut positions: Vec<f64>, wavelength: f64, aperture: f64) -> Result<Self> {
        if positions.len() < 2 {
            return Err(invalid(format!(
                "an array needs at least 2 elements, got {}",
                positions.len()
            )));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(invalid(format!("wavelength must be positive, got {wavelength}")));
        }
        if !(aperture >= 0.0 && aperture.is_finite()) {
            return Err(invalid(format!("aperture must be nonnegative, got {aperture}")));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(invalid("positions must be finite"));
        }
        positions.sort_by(f64::total_cmp);
        let slack = RANGE_SLACK * aperture.max(wavelength);
        let (lo, hi) = (positions[0], positions[positions.len() - 1]);
        if lo < -slack || hi > aperture + slack {
            return Err(invalid(format!(
                "positions [{lo}, {hi}] fall outside the deployment region [0, {aperture}]"
            )));
        }
        for p in positions.iter_mut() {
            *p = p.clamp(0.0, aperture);
        }
        Ok(Self {
            positions,
            wavelength,
            aperture,
        })
    }

    /// Builds a geometry from integer multiples of `d0`.
    pub fn from_grid(units: &[i64], d0: f64, aperture_units: i64) -> Result<Self> {
        if !(d0 > 0.0) {
            return Err(invalid(format!("d0 must be positive, got {d0}")));
        }
        let positions = units.iter().map(|&u| u as f64 * d0).collect();
        Self::new(positions, 2.0 * d0, aperture_units as f64 * d0)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Deployment aperture `D`.
    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    /// Nyquist spacing `λ/2`.
    pub fn d0(&self) -> f64 {
        0.5 * self.wavelength
    }

    /// Span actually covered by the elements, `p_max - p_min`.
    pub fn physical_aperture(&self) -> f64 {
        self.positions[self.positions.len() - 1] - self.positions[0]
    }

    /// Wavenumber `2π/λ`.
    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    /// Same wavelength and aperture, new positions.
    pub fn with_positions(&self, positions: Vec<f64>) -> Result<Self> {
        Self::new(positions, self.wavelength, self.aperture)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn check_d0(d0: f64) -> Result<()> {
    if d0 > 0.0 && d0.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("d0 must be positive, got {d0}")))
    }
}

/// Uniform linear array `{0, d0, …, (N-1)d0}` with `D = (N-1)d0`.
pub fn make_ula(n: usize, d0: f64) -> Result<ArrayGeometry> {
    check_d0(d0)?;
    if n < 2 {
        return Err(invalid(format!("a ULA needs N >= 2, got {n}")));
    }
    let units: Vec<i64> = (0..n as i64).collect();
    ArrayGeometry::from_grid(&units, d0, n as i64 - 1)
}

/// Two-level nested array: a dense level `{1..N1}·d0` followed by a sparse
/// level `{(N1+1)·m : m = 1..N2}·d0`. Aperture `N2(N1+1)d0`.
pub fn make_nested(n1: usize, n2: usize, d0: f64) -> Result<ArrayGeometry> {
    check_d0(d0)?;
    if n1 < 1 || n2 < 1 || n1 + n2 < 2 {
        return Err(invalid(format!(
            "nested level sizes must be positive, got N1={n1}, N2={n2}"
        )));
    }
    let step = n1 as i64 + 1;
    let mut units: Vec<i64> = (1..=n1 as i64).collect();
    units.extend((1..=n2 as i64).map(|m| step * m));
    units.sort_unstable();
    units.dedup();
    ArrayGeometry::from_grid(&units, d0, n2 as i64 * step)
}

/// Nested array with the level split `N1 + N2 = N` that maximizes the
/// contiguous DOF (ties go to the smaller aperture, then the larger `N1`).
pub fn make_nested_best_split(n: usize, d0: f64) -> Result<ArrayGeometry> {
    if n < 2 {
        return Err(invalid(format!("a nested array needs N >= 2, got {n}")));
    }
    let mut best: Option<(usize, f64, ArrayGeometry)> = None;
    for n1 in (1..n).rev() {
        let g = make_nested(n1, n - n1, d0)?;
        let dof = coarray_dof(&difference_coarray(&g, DifferenceCoarray::default_tol_grid(d0)));
        let better = match &best {
            None => true,
            Some((b, ap, _)) => dof > *b || (dof == *b && g.aperture() < *ap),
        };
        if better {
            best = Some((dof, g.aperture(), g));
        }
    }
    Ok(best.expect("at least one split").2)
}

/// Extended coprime array `{0, M, …, (Nc-1)M}·d0 ∪ {Nc, 2Nc, …, (2M-1)Nc}·d0`.
pub fn make_coprime(m: usize, nc: usize, d0: f64) -> Result<ArrayGeometry> {
    check_d0(d0)?;
    if m < 2 || nc < 2 {
        return Err(invalid(format!("coprime factors must be >= 2, got M={m}, Nc={nc}")));
    }
    if gcd(m, nc) != 1 {
        return Err(invalid(format!("M={m} and Nc={nc} are not coprime")));
    }
    let (m, nc) = (m as i64, nc as i64);
    let mut units: Vec<i64> = (0..nc).map(|i| i * m).collect();
    units.extend((1..2 * m).map(|i| i * nc));
    units.sort_unstable();
    units.dedup();
    let aperture = *units.last().expect("non-empty");
    ArrayGeometry::from_grid(&units, d0, aperture)
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `min(N² - N + 1, 2·floor(D/d0) + 1)`.
pub fn dual_dof_bound(n: usize, aperture: f64, d0: f64) -> Result<usize> {
    check_d0(d0)?;
    if n < 2 {
        return Err(invalid(format!("N must be >= 2, got {n}")));
    }
    if !(aperture > 0.0) {
        return Err(invalid(format!("D must be positive, got {aperture}")));
    }
    let combinatorial = n * n - n + 1;
    let geometric = 2 * (aperture / d0).floor() as usize + 1;
    Ok(combinatorial.min(geometric))
}

/// Central moments `μ_2 … μ_kmax` of the element positions about their mean.
pub fn position_moments(geom: &ArrayGeometry, k_max: usize) -> Result<Vec<f64>> {
    central_moments(geom.positions(), k_max)
}

/// Central moments `μ_2 … μ_kmax` of a raw position list.
pub fn central_moments(positions: &[f64], k_max: usize) -> Result<Vec<f64>> {
    if k_max < 2 {
        return Err(invalid(format!("k_max must be >= 2, got {k_max}")));
    }
    let n = positions.len() as f64;
    let mean = positions.iter().sum::<f64>() / n;
    Ok((2..=k_max as i32)
        .map(|k| positions.iter().map(|p| (p - mean).powi(k)).sum::<f64>() / n)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn units(g: &ArrayGeometry) -> Vec<i64> {
        g.positions().iter().map(|p| (p / g.d0()).round() as i64).collect()
    }

    #[test]
    fn ula_positions_and_aperture() {
        let g = make_ula(6, 0.5).unwrap();
        assert_eq!(g.positions(), &[0.0, 0.5, 1.0, 1.5, 2.0, 2.5]);
        assert_eq!(g.aperture(), 2.5);
        assert_eq!(g.aperture() / g.wavelength(), 2.5);
        assert_eq!(make_ula(2, 0.5).unwrap().positions(), &[0.0, 0.5]);
        assert_eq!(make_ula(3, 1.0).unwrap().positions(), &[0.0, 1.0, 2.0]);
        assert!(matches!(make_ula(1, 0.5), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn nested_construction() {
        let g = make_nested(3, 3, 1.0).unwrap();
        assert_eq!(units(&g), vec![1, 2, 3, 4, 8, 12]);
        assert_eq!(g.aperture(), 12.0);
        assert_eq!(units(&make_nested(1, 1, 1.0).unwrap()), vec![1, 2]);
        assert_eq!(units(&make_nested(2, 2, 1.0).unwrap()), vec![1, 2, 3, 6]);
        assert!(make_nested(0, 3, 1.0).is_err());
        assert!(make_nested(3, 0, 1.0).is_err());
    }

    #[test]
    fn coprime_construction() {
        let g = make_coprime(2, 3, 1.0).unwrap();
        assert_eq!(units(&g), vec![0, 2, 3, 4, 6, 9]);
        assert_eq!(make_coprime(3, 4, 1.0).unwrap().len(), 9);
        assert!(matches!(make_coprime(2, 4, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn best_nested_split_for_six() {
        let g = make_nested_best_split(6, 0.5).unwrap();
        assert_eq!(units(&g), vec![1, 2, 3, 4, 8, 12]);
    }

    #[test]
    fn dual_bound_values() {
        assert_eq!(dual_dof_bound(6, 20.0, 0.5).unwrap(), 31);
        assert_eq!(dual_dof_bound(2, 0.5, 0.5).unwrap(), 3);
        assert_eq!(dual_dof_bound(10, 1.5, 0.5).unwrap(), 7);
    }

    #[test]
    fn moments() {
        let d = 7.0;
        let two = ArrayGeometry::new(vec![0.0, d], 1.0, d).unwrap();
        assert!((position_moments(&two, 2).unwrap()[0] - d * d / 4.0).abs() < 1e-12);

        let same = ArrayGeometry::new(vec![1.0; 4], 1.0, 2.0).unwrap();
        assert!(position_moments(&same, 6).unwrap().iter().all(|m| *m == 0.0));

        // endpoint-plus-midpoint keeps only (1 - 1/N) of D²/4
        let mid = ArrayGeometry::new(vec![0.0, d / 2.0, d], 1.0, d).unwrap();
        let mu2 = position_moments(&mid, 2).unwrap()[0];
        assert!((mu2 - d * d / 4.0 * (1.0 - 1.0 / 3.0)).abs() < 1e-12);
        // the uneven endpoint split reaches (1 - 1/N²)
        let ends = ArrayGeometry::new(vec![0.0, 0.0, d], 1.0, d).unwrap();
        let mu2 = position_moments(&ends, 2).unwrap()[0];
        assert!((mu2 - d * d / 4.0 * (1.0 - 1.0 / 9.0)).abs() < 1e-12);
        assert!(position_moments(&mid, 1).is_err());
    }

    #[test]
    fn rejects_out_of_range_positions() {
        assert!(ArrayGeometry::new(vec![0.0, 2.0], 1.0, 1.5).is_err());
        assert!(ArrayGeometry::new(vec![0.0], 1.0, 1.5).is_err());
        assert!(ArrayGeometry::new(vec![0.0, 1.0], 0.0, 1.5).is_err());
    }

    #[test]
    fn json_layout() {
        let g = make_ula(3, 0.5).unwrap();
        let text = g.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["wavelength"], 1.0);
        assert_eq!(v["aperture"], 1.0);
        assert_eq!(v["positions"].as_array().unwrap().len(), 3);
        assert_eq!(ArrayGeometry::from_json(&text).unwrap(), g);
        assert!(ArrayGeometry::from_json(r#"{"wavelength":1,"aperture":1,"positions":[0,3]}"#).is_err());
    }
}
