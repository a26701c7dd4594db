use num_complex::Complex64;

use super::{Diagnostics, EstimateResult, Spectrum};
use crate::error::{invalid, Error, Result};
use crate::geometry::{difference_coarray, ArrayGeometry, DifferenceCoarray};
use crate::linalg::{cis, hermitian_eigen, CMatrix};
use crate::signal::{vectorize_covariance, CovarianceEstimate};

/// Scan angles `−90° + k·step`, excluding `±90°`, in degrees.
pub fn scan_grid(step_deg: f64) -> Result<Vec<f64>> {
    if !(step_deg > 0.0 && step_deg < 90.0) {
        return Err(invalid(format!("scan step must lie in (0°, 90°), got {step_deg}")));
    }
    let count = (180.0 / step_deg).ceil() as usize;
    Ok((1..count)
        .map(|k| -90.0 + k as f64 * step_deg)
        .take_while(|t| *t < 90.0)
        .collect())
}

/// Pseudo-spectrum `1 / ‖E_nᴴ a(θ)‖²` for an `M × M` covariance whose
/// steering vector entries are `exp(j·phase_m·sinθ)`.
fn music_spectrum(r: &CMatrix, phases: &[f64], l: usize, grid_deg: &[f64]) -> Vec<f64> {
    let (_, vecs) = hermitian_eigen(r);
    let m = r.nrows();
    let noise = vecs.columns(0, m - l).into_owned();
    let proj = &noise * noise.adjoint();
    let mut a = vec![Complex64::new(0.0, 0.0); m];
    grid_deg
        .iter()
        .map(|t| {
            let s = t.to_radians().sin();
            for (ai, &ph) in a.iter_mut().zip(phases) {
                *ai = cis(ph * s);
            }
            let mut q = 0.0;
            for i in 0..m {
                let mut row = Complex64::new(0.0, 0.0);
                for j in 0..m {
                    row += proj[(i, j)] * a[j];
                }
                q += (a[i].conj() * row).re;
            }
            1.0 / q.max(f64::MIN_POSITIVE)
        })
        .collect()
}

/// The `l` largest local maxima separated by at least two grid steps,
/// refined by a parabola through the log-spectrum. Returns the angles in
/// degrees (unsorted) and whether `l` genuine peaks were found; shortfalls
/// are padded with the best remaining grid points.
pub(crate) fn pick_peaks(grid_deg: &[f64], values: &[f64], l: usize, step_deg: f64) -> (Vec<f64>, bool) {
    let n = values.len();
    let mut maxima: Vec<usize> = (1..n.saturating_sub(1))
        .filter(|&k| values[k] > values[k - 1] && values[k] >= values[k + 1])
        .collect();
    maxima.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = Vec::with_capacity(l);
    for k in maxima {
        if chosen.len() == l {
            break;
        }
        if chosen.iter().all(|&c| c.abs_diff(k) >= 2) {
            chosen.push(k);
        }
    }
    let found = chosen.len() == l;
    if !found {
        let mut rest: Vec<usize> = (0..n).collect();
        rest.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        for k in rest {
            if chosen.len() == l {
                break;
            }
            if chosen.iter().all(|&c| c.abs_diff(k) >= 2) {
                chosen.push(k);
            }
        }
    }
    let angles = chosen
        .iter()
        .map(|&k| {
            if k == 0 || k + 1 >= n {
                return grid_deg[k];
            }
            let (y0, y1, y2) = (values[k - 1].ln(), values[k].ln(), values[k + 1].ln());
            let denom = y0 - 2.0 * y1 + y2;
            let offset = if denom < 0.0 { (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5) } else { 0.0 };
            grid_deg[k] + offset * step_deg
        })
        .collect();
    (angles, found)
}

fn finish(mut theta_deg: Vec<f64>, spectrum: Spectrum, converged: bool, m_c: Option<usize>, m_s: Option<usize>) -> EstimateResult {
    theta_deg.sort_by(f64::total_cmp);
    let theta: Vec<f64> = theta_deg.iter().map(|t| t.to_radians()).collect();
    EstimateResult {
        theta_hat: theta.clone(),
        theta_coarse: theta,
        spectrum: Some(spectrum),
        diagnostics: Diagnostics {
            m_c,
            m_s,
            ml_iterations: 0,
            converged,
            ml_objective: None,
            ml_objective_coarse: None,
        },
    }
}

/// MUSIC on the physical array: noise subspace from the `N − L` smallest
/// eigenvalues of `R̂`, pseudo-spectrum scanned at `grid_step_deg`.
pub fn music_estimate(r: &CovarianceEstimate, geom: &ArrayGeometry, l: usize, grid_step_deg: f64) -> Result<EstimateResult> {
    let n = geom.len();
    if r.dim() != n {
        return Err(invalid(format!("covariance is {0}x{0} but the geometry has {n} elements", r.dim())));
    }
    if l == 0 {
        return Err(invalid("at least one source must be requested"));
    }
    if l >= n {
        return Err(Error::TooManySources(format!("MUSIC on {n} elements resolves at most {} sources, asked for {l}", n - 1)));
    }
    let grid = scan_grid(grid_step_deg)?;
    let phases: Vec<f64> = geom.positions().iter().map(|p| geom.wavenumber() * p).collect();
    let values = music_spectrum(&r.matrix, &phases, l, &grid);
    let (theta, found) = pick_peaks(&grid, &values, l, grid_step_deg);
    Ok(finish(
        theta,
        Spectrum {
            angles_deg: grid,
            values,
        },
        found,
        None,
        None,
    ))
}

/// Spatially smoothed covariance of the contiguous virtual ULA, with its
/// half-length `M_c` and subarray size `M_s = M_c + 1`.
pub fn smoothed_coarray_covariance(r: &CovarianceEstimate, geom: &ArrayGeometry) -> Result<(CMatrix, usize, usize)> {
    let coarray = difference_coarray(geom, DifferenceCoarray::default_tol_grid(geom.d0()));
    let mc = coarray.contiguous_half_length();
    if mc == 0 {
        return Err(Error::NoContiguousCoarray);
    }
    let obs = vectorize_covariance(r, &coarray)?;
    let ms = mc + 1;
    let z: Vec<Complex64> = (-(mc as i64)..=mc as i64)
        .map(|m| obs.at_grid(m).expect("contiguous lag present"))
        .collect();
    let windows = mc + 1;
    let mut rss = CMatrix::zeros(ms, ms);
    for k in 0..windows {
        let w = &z[k..k + ms];
        for i in 0..ms {
            for j in 0..ms {
                rss[(i, j)] += w[i] * w[j].conj();
            }
        }
    }
    rss /= Complex64::new(windows as f64, 0.0);
    Ok((crate::linalg::hermitian_part(&rss), mc, ms))
}

/// Coarray MUSIC: redundancy averaging onto the `d0` grid, spatial smoothing
/// of the contiguous segment, MUSIC with half-wavelength virtual ULA
/// steering.
pub fn coarray_music(r: &CovarianceEstimate, geom: &ArrayGeometry, l: usize, grid_step_deg: f64) -> Result<EstimateResult> {
    if l == 0 {
        return Err(invalid("at least one source must be requested"));
    }
    let (rss, mc, ms) = smoothed_coarray_covariance(r, geom)?;
    if l > ms - 1 {
        return Err(Error::TooManySources(format!(
            "contiguous coarray with M_c = {mc} supports at most {} sources, asked for {l}",
            ms - 1
        )));
    }
    let grid = scan_grid(grid_step_deg)?;
    let phases: Vec<f64> = (0..ms).map(|i| std::f64::consts::PI * i as f64).collect();
    let values = music_spectrum(&rss, &phases, l, &grid);
    let (theta, found) = pick_peaks(&grid, &values, l, grid_step_deg);
    Ok(finish(
        theta,
        Spectrum {
            angles_deg: grid,
            values,
        },
        found,
        Some(mc),
        Some(ms),
    ))
}
