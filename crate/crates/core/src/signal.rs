//! Narrowband far-field snapshot model for an `N`-position virtual array:
//! steering vectors, seeded snapshot synthesis, sample covariance, the
//! redundancy-averaged coarray observation and the position-error model.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{ArrayGeometry, DifferenceCoarray};
use crate::linalg::{cis, hermitian_part, CMatrix, CVector};

/// Mixes a master seed with a trial index into an independent 64-bit seed.
///
/// Trials seeded this way do not depend on execution order.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Source directions, powers, noise level and snapshot count.
///
/// Angles are radians, strictly increasing, inside `(-π/2, π/2)`.
/// A zero noise power describes the noiseless limit; bound computations
/// require it to be positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceScenario {
    doas: Vec<f64>,
    powers: Vec<f64>,
    noise_power: f64,
    snapshots: usize,
}

impl SourceScenario {
    pub fn new(doas: Vec<f64>, powers: Vec<f64>, noise_power: f64, snapshots: usize) -> Result<Self> {
        if doas.is_empty() {
            return Err(invalid("a scenario needs at least one source"));
        }
        if doas.len() != powers.len() {
            return Err(invalid(format!(
                "{} directions but {} powers",
                doas.len(),
                powers.len()
            )));
        }
        if doas.iter().any(|t| !(t.abs() < FRAC_PI_2)) {
            return Err(invalid("directions must lie strictly inside (-90°, 90°)"));
        }
        if doas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("directions must be strictly increasing"));
        }
        if powers.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(invalid("source powers must be positive and finite"));
        }
        if !(noise_power >= 0.0 && noise_power.is_finite()) {
            return Err(invalid(format!("noise power must be nonnegative, got {noise_power}")));
        }
        if snapshots == 0 {
            return Err(invalid("at least one snapshot is required"));
        }
        Ok(Self {
            doas,
            powers,
            noise_power,
            snapshots,
        })
    }

    /// Equal-power sources at `snr_db` against unit noise power.
    pub fn equal_power_deg(doas_deg: &[f64], snr_db: f64, snapshots: usize) -> Result<Self> {
        let mut doas: Vec<f64> = doas_deg.iter().map(|d| d.to_radians()).collect();
        doas.sort_by(f64::total_cmp);
        let power = 10f64.powf(snr_db / 10.0);
        Self::new(doas, vec![power; doas_deg.len()], 1.0, snapshots)
    }

    /// Same powers, noise and snapshots, new directions (radians).
    pub fn with_doas(&self, mut doas: Vec<f64>) -> Result<Self> {
        doas.sort_by(f64::total_cmp);
        let powers = if doas.len() == self.powers.len() {
            self.powers.clone()
        } else {
            vec![self.powers[0]; doas.len()]
        };
        Self::new(doas, powers, self.noise_power, self.snapshots)
    }

    pub fn doas(&self) -> &[f64] {
        &self.doas
    }

    pub fn doas_deg(&self) -> Vec<f64> {
        self.doas.iter().map(|t| t.to_degrees()).collect()
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn snapshots(&self) -> usize {
        self.snapshots
    }

    pub fn num_sources(&self) -> usize {
        self.doas.len()
    }
}

/// `[a(θ)]_n = exp(j·2π/λ·p_n·sinθ)`.
pub fn steering_vector(geom: &ArrayGeometry, theta: f64) -> CVector {
    let k = geom.wavenumber() * theta.sin();
    CVector::from_iterator(geom.len(), geom.positions().iter().map(|&p| cis(k * p)))
}

/// Steering matrix with one column per direction.
pub fn steering_matrix(geom: &ArrayGeometry, doas: &[f64]) -> CMatrix {
    let k = geom.wavenumber();
    let p = geom.positions();
    CMatrix::from_fn(p.len(), doas.len(), |n, l| cis(k * p[n] * doas[l].sin()))
}

/// Derivative of the steering matrix with respect to each column's angle.
pub fn steering_derivative(geom: &ArrayGeometry, doas: &[f64]) -> CMatrix {
    let k = geom.wavenumber();
    let p = geom.positions();
    CMatrix::from_fn(p.len(), doas.len(), |n, l| {
        let (s, c) = doas[l].sin_cos();
        Complex64::new(0.0, k * p[n] * c) * cis(k * p[n] * s)
    })
}

/// `A R_s A^H + σ² I`.
pub fn model_covariance(geom: &ArrayGeometry, scenario: &SourceScenario) -> CMatrix {
    let a = steering_matrix(geom, scenario.doas());
    let rs = CMatrix::from_diagonal(&CVector::from_iterator(
        scenario.num_sources(),
        scenario.powers().iter().map(|&p| Complex64::new(p, 0.0)),
    ));
    let mut r = &a * rs * a.adjoint();
    for i in 0..geom.len() {
        r[(i, i)] += scenario.noise_power();
    }
    hermitian_part(&r)
}

/// Data matrix `X` (`N × N_p`) drawn for one geometry and scenario.
#[derive(Debug, Clone)]
pub struct SnapshotData {
    pub matrix: CMatrix,
    pub geometry: ArrayGeometry,
    pub scenario: SourceScenario,
    pub seed: u64,
}

fn circular_gaussian(rng: &mut ChaCha8Rng, variance: f64) -> Complex64 {
    let scale = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(scale * re, scale * im)
}

/// Draws `x(t) = A s(t) + n(t)` with i.i.d. circular Gaussian sources of
/// variance `P_ℓ` and noise of variance `σ²`. Bit-identical for a given seed.
pub fn synthesize_snapshots(geom: &ArrayGeometry, scenario: &SourceScenario, seed: u64) -> SnapshotData {
    let mut rng = rng_from_seed(seed);
    let (n, l, np) = (geom.len(), scenario.num_sources(), scenario.snapshots());
    let a = steering_matrix(geom, scenario.doas());
    let mut s = CMatrix::zeros(l, np);
    for t in 0..np {
        for (src, &p) in scenario.powers().iter().enumerate() {
            s[(src, t)] = circular_gaussian(&mut rng, p);
        }
    }
    let mut x = &a * s;
    if scenario.noise_power() > 0.0 {
        for t in 0..np {
            for row in 0..n {
                x[(row, t)] += circular_gaussian(&mut rng, scenario.noise_power());
            }
        }
    }
    SnapshotData {
        matrix: x,
        geometry: geom.clone(),
        scenario: scenario.clone(),
        seed,
    }
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    rows: usize,
    cols: usize,
    seed: u64,
    format: String,
    order: String,
}

impl SnapshotData {
    /// Writes `X` as little-endian complex64 pairs (`f32` re, `f32` im),
    /// row-major, plus a JSON sidecar `<path>.json` with dimensions and seed.
    pub fn write_binary(&self, path: &Path) -> Result<PathBuf> {
        let (rows, cols) = self.matrix.shape();
        let mut bytes = Vec::with_capacity(rows * cols * 8);
        for r in 0..rows {
            for c in 0..cols {
                let z = self.matrix[(r, c)];
                bytes.extend_from_slice(&(z.re as f32).to_le_bytes());
                bytes.extend_from_slice(&(z.im as f32).to_le_bytes());
            }
        }
        fs::File::create(path)?.write_all(&bytes)?;
        let header = DumpHeader {
            rows,
            cols,
            seed: self.seed,
            format: "complex64-le".into(),
            order: "row-major".into(),
        };
        let sidecar = sidecar_path(path);
        fs::write(&sidecar, serde_json::to_string_pretty(&header)?)?;
        Ok(sidecar)
    }

    /// Reads a dump written by [`SnapshotData::write_binary`]; returns the
    /// matrix and the seed from the sidecar.
    pub fn read_binary(path: &Path) -> Result<(CMatrix, u64)> {
        let header: DumpHeader = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        let bytes = fs::read(path)?;
        if bytes.len() != header.rows * header.cols * 8 {
            return Err(invalid(format!(
                "dump holds {} bytes, sidecar expects {}x{} complex64 values",
                bytes.len(),
                header.rows,
                header.cols
            )));
        }
        let f = |i: usize| f32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes")) as f64;
        let m = CMatrix::from_fn(header.rows, header.cols, |r, c| {
            let k = 2 * (r * header.cols + c);
            Complex64::new(f(k), f(k + 1))
        });
        Ok((m, header.seed))
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Hermitian sample covariance `R̂ = X X^H / N_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: CMatrix,
}

impl CovarianceEstimate {
    /// Wraps a matrix, replacing it by its Hermitian part.
    pub fn from_matrix(m: &CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(invalid("covariance must be a non-empty square matrix"));
        }
        Ok(Self {
            matrix: hermitian_part(m),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).sum()
    }
}

pub fn sample_covariance(data: &SnapshotData) -> CovarianceEstimate {
    let np = data.matrix.ncols() as f64;
    let r = &data.matrix * data.matrix.adjoint() / Complex64::new(np, 0.0);
    CovarianceEstimate {
        matrix: hermitian_part(&r),
    }
}

/// Redundancy-averaged covariance entries indexed by coarray lag.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarrayObservation {
    /// `(lag, averaged value)` in the lag order of the coarray.
    pub values: Vec<(f64, Complex64)>,
    /// Averages over every pair whose lag rounds to `m·d0`.
    pub grid: BTreeMap<i64, Complex64>,
}

impl CoarrayObservation {
    pub fn at_grid(&self, m: i64) -> Option<Complex64> {
        self.grid.get(&m).copied()
    }
}

/// Averages `R̂[i, j]` over all pairs sharing each lag `p_i - p_j`.
///
/// Negative lags are filled as conjugates of the positive ones, which equals
/// the direct average for a Hermitian `R̂` and keeps the symmetry exact.
pub fn vectorize_covariance(r: &CovarianceEstimate, coarray: &DifferenceCoarray) -> Result<CoarrayObservation> {
    if r.dim() != coarray.n_sensors() {
        return Err(invalid(format!(
            "covariance is {0}x{0} but the coarray has {1} sensors",
            r.dim(),
            coarray.n_sensors()
        )));
    }
    let average = |pairs: &mut dyn Iterator<Item = (usize, usize)>| {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut count = 0usize;
        for (i, j) in pairs {
            sum += r.matrix[(i, j)];
            count += 1;
        }
        sum / count as f64
    };

    let lags = coarray.lags();
    let k = lags.len();
    let mid = k / 2;
    let mut values = vec![(0.0, Complex64::new(0.0, 0.0)); k];
    values[mid] = (0.0, average(&mut lags[mid].pairs.iter().copied()));
    for idx in (mid + 1)..k {
        let v = average(&mut lags[idx].pairs.iter().copied());
        values[idx] = (lags[idx].value, v);
        values[k - 1 - idx] = (lags[k - 1 - idx].value, v.conj());
    }

    let mut grid = BTreeMap::new();
    for m in coarray.grid_lags().filter(|&m| m >= 0) {
        let v = average(&mut coarray.pairs_at_grid(m));
        grid.insert(m, v);
        if m > 0 {
            grid.insert(-m, v.conj());
        }
    }
    Ok(CoarrayObservation { values, grid })
}

/// Perturbs each position by i.i.d. `Uniform[-δ/2, δ/2]`, keeping element
/// order, clamped to `[0, D]`.
pub fn perturb_positions(geom: &ArrayGeometry, delta_p: f64, seed: u64) -> Result<Vec<f64>> {
    if !(delta_p >= 0.0 && delta_p.is_finite()) {
        return Err(invalid(format!("position error spread must be nonnegative, got {delta_p}")));
    }
    if delta_p == 0.0 {
        return Ok(geom.positions().to_vec());
    }
    let mut rng = rng_from_seed(seed);
    let d = geom.aperture();
    Ok(geom
        .positions()
        .iter()
        .map(|&p| (p + delta_p * (rng.random::<f64>() - 0.5)).clamp(0.0, d))
        .collect())
}

/// Geometry with quantization-style position errors applied.
///
/// Element order is preserved unless two elements are closer than `δ_p`,
/// in which case the result is re-sorted.
pub fn apply_position_error(geom: &ArrayGeometry, delta_p: f64, seed: u64) -> Result<ArrayGeometry> {
    geom.with_positions(perturb_positions(geom, delta_p, seed)?)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

/// SNR loss in dB predicted by `sinc²(π δ_p sinθ / λ)`.
pub fn sinc2_snr_loss_db(delta_p: f64, theta: f64, wavelength: f64) -> f64 {
    let s = sinc(PI * delta_p * theta.sin() / wavelength);
    -10.0 * (s * s).log10()
}

/// Monte Carlo SNR loss in dB of a beamformer steered with the nominal
/// positions while the array sits at perturbed ones, relative to the
/// error-free gain `N²`.
pub fn simulated_snr_loss_db(
    geom: &ArrayGeometry,
    delta_p: f64,
    theta: f64,
    trials: usize,
    master_seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(invalid("at least one trial is required"));
    }
    let nominal = steering_vector(geom, theta);
    let n = geom.len() as f64;
    let mut gain = 0.0;
    for t in 0..trials {
        let actual = perturb_positions(geom, delta_p, derive_seed(master_seed, t as u64))?;
        let k = geom.wavenumber() * theta.sin();
        let response: Complex64 = nominal
            .iter()
            .zip(&actual)
            .map(|(a, &p)| a.conj() * cis(k * p))
            .sum();
        gain += response.norm_sqr() / (n * n);
    }
    Ok(-10.0 * (gain / trials as f64).log10())
}

/// Relative Frobenius distance `‖A - B‖ / ‖B‖`.
pub fn relative_frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm() / b.norm()
}

/// Real and imaginary parts as separate matrices (test and report helper).
pub fn split_parts(m: &CMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{difference_coarray, make_ula};
    use crate::linalg::hermitian_eigen;

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    #[test]
    fn broadside_steering_is_all_ones() {
        let g = make_ula(5, 0.5).unwrap();
        let a = steering_vector(&g, 0.0);
        assert!(a.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn half_wavelength_endfire_increment() {
        let g = make_ula(4, 0.5).unwrap();
        let a = steering_vector(&g, FRAC_PI_2 - 1e-9);
        let inc = (a[1] * a[0].conj()).arg();
        assert!((inc.abs() - PI).abs() < 1e-6);
    }

    #[test]
    fn one_wavelength_at_thirty_degrees() {
        let g = ArrayGeometry::new(vec![0.0, 1.0], 1.0, 1.0).unwrap();
        let a = steering_vector(&g, deg(30.0));
        assert!((a[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((a[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn steering_matrix_columns_are_unit_modulus() {
        let d0 = 0.5;
        let g = ArrayGeometry::new([0.0, 3.0, 8.0, 32.0, 37.0, 40.0].iter().map(|u| u * d0).collect(), 1.0, 20.0)
            .unwrap();
        let doas = [deg(10.0), deg(25.0)];
        let a = steering_matrix(&g, &doas);
        assert_eq!(a.shape(), (6, 2));
        assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        for (l, &t) in doas.iter().enumerate() {
            assert!((a.column(l) - steering_vector(&g, t)).norm() < 1e-13);
        }
    }

    #[test]
    fn scenario_invariants() {
        assert!(SourceScenario::new(vec![0.1, 0.1], vec![1.0, 1.0], 1.0, 10).is_err());
        assert!(SourceScenario::new(vec![0.2, 0.1], vec![1.0, 1.0], 1.0, 10).is_err());
        assert!(SourceScenario::new(vec![FRAC_PI_2], vec![1.0], 1.0, 10).is_err());
        assert!(SourceScenario::new(vec![0.1], vec![1.0, 2.0], 1.0, 10).is_err());
        assert!(SourceScenario::new(vec![0.1], vec![0.0], 1.0, 10).is_err());
        assert!(SourceScenario::new(vec![0.1], vec![1.0], 1.0, 0).is_err());
        let s = SourceScenario::equal_power_deg(&[25.0, 10.0], 10.0, 500).unwrap();
        assert!((s.doas()[0] - deg(10.0)).abs() < 1e-15);
        assert!((s.powers()[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let g = make_ula(4, 0.5).unwrap();
        let s = SourceScenario::equal_power_deg(&[10.0], 5.0, 50).unwrap();
        let a = synthesize_snapshots(&g, &s, 99);
        let b = synthesize_snapshots(&g, &s, 99);
        let c = synthesize_snapshots(&g, &s, 100);
        assert_eq!(a.matrix, b.matrix);
        assert_ne!(a.matrix, c.matrix);
    }

    #[test]
    fn single_snapshot_covariance_is_outer_product() {
        let g = make_ula(3, 0.5).unwrap();
        let s = SourceScenario::equal_power_deg(&[20.0], 0.0, 1).unwrap();
        let d = synthesize_snapshots(&g, &s, 1);
        let r = sample_covariance(&d);
        let x = d.matrix.column(0);
        assert!((&r.matrix - x * x.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn noiseless_covariance_is_rank_one() {
        let g = make_ula(5, 0.5).unwrap();
        let s = SourceScenario::new(vec![deg(12.0)], vec![2.0], 0.0, 40).unwrap();
        let r = sample_covariance(&synthesize_snapshots(&g, &s, 3));
        let (vals, _) = hermitian_eigen(&r.matrix);
        let top = vals[4];
        assert!(vals[..4].iter().all(|v| v.abs() < 1e-10 * top));
    }

    #[test]
    fn covariance_is_hermitian_and_psd() {
        let g = make_ula(6, 0.5).unwrap();
        let s = SourceScenario::equal_power_deg(&[-20.0, 15.0], 3.0, 7).unwrap();
        let r = sample_covariance(&synthesize_snapshots(&g, &s, 11));
        assert_eq!(r.matrix, r.matrix.adjoint());
        let (vals, _) = hermitian_eigen(&r.matrix);
        assert!(vals[0] >= -1e-9 * r.trace());
    }

    #[test]
    fn noiseless_coarray_values_follow_the_phasor() {
        let d0 = 0.5;
        let g = ArrayGeometry::new(vec![0.0, 0.5, 2.0, 3.0], 1.0, 3.0).unwrap();
        let theta = deg(17.0);
        let s = SourceScenario::new(vec![theta], vec![1.5], 0.0, 1).unwrap();
        let r = CovarianceEstimate::from_matrix(&model_covariance(&g, &s)).unwrap();
        let c = difference_coarray(&g, 1e-3 * d0);
        let z = vectorize_covariance(&r, &c).unwrap();
        for &(lag, v) in &z.values {
            let expect = cis(g.wavenumber() * lag * theta.sin()) * 1.5;
            assert!((v - expect).norm() < 1e-12);
        }
        for m in -6..=6 {
            let expect = cis(PI * m as f64 * theta.sin()) * 1.5;
            assert!((z.at_grid(m).unwrap() - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn coarray_values_are_conjugate_symmetric_and_lag_zero_is_the_mean_power() {
        let g = ArrayGeometry::new(vec![0.0, 0.2, 0.5, 1.7, 2.0], 1.0, 2.0).unwrap();
        let s = SourceScenario::equal_power_deg(&[-5.0, 30.0], 0.0, 30).unwrap();
        let r = sample_covariance(&synthesize_snapshots(&g, &s, 8));
        let c = difference_coarray(&g, 5e-4);
        let z = vectorize_covariance(&r, &c).unwrap();
        let k = z.values.len();
        for i in 0..k {
            assert_eq!(z.values[i].1, z.values[k - 1 - i].1.conj());
        }
        assert_eq!(z.values[k / 2].1.im, 0.0);
        assert!((z.values[k / 2].1.re - r.trace() / 5.0).abs() < 1e-12);
        for (&m, v) in &z.grid {
            assert_eq!(*v, z.grid[&-m].conj());
        }

        let wrong = CovarianceEstimate::from_matrix(&CMatrix::identity(3, 3)).unwrap();
        assert!(vectorize_covariance(&wrong, &c).is_err());
    }

    #[test]
    fn zero_position_error_is_identity() {
        let g = make_ula(4, 0.5).unwrap();
        assert_eq!(apply_position_error(&g, 0.0, 5).unwrap(), g);
        let moved = apply_position_error(&g, 0.05, 5).unwrap();
        for (a, b) in moved.positions().iter().zip(g.positions()) {
            assert!((a - b).abs() <= 0.025 + 1e-15);
        }
        assert!(apply_position_error(&g, -1.0, 5).is_err());
    }

    #[test]
    fn eighth_wavelength_costs_under_one_db() {
        assert!(sinc2_snr_loss_db(0.125, FRAC_PI_2, 1.0) <= 1.0);
        assert_eq!(sinc2_snr_loss_db(0.0, 0.3, 1.0), 0.0);
    }

    #[test]
    fn seeds_are_spread() {
        let a = derive_seed(7, 0);
        let b = derive_seed(7, 1);
        let c = derive_seed(8, 0);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, derive_seed(7, 0));
    }
}
