use rand::Rng;

use super::extract::enforce_spacing;
use crate::error::{invalid, Result};
use crate::fisher::{fim_exact_positions, log_det_spd};
use crate::geometry::{coarray_dof, difference_coarray, ArrayGeometry, DifferenceCoarray};
use crate::signal::{rng_from_seed, SourceScenario};

const MAX_PASSES: usize = 500;

fn dof_of(positions: &[f64], wavelength: f64, aperture: f64) -> Option<(usize, usize)> {
    let g = ArrayGeometry::new(positions.to_vec(), wavelength, aperture).ok()?;
    let c = difference_coarray(&g, DifferenceCoarray::default_tol_grid(g.d0()));
    Some((coarray_dof(&c), c.contiguous_half_length()))
}

/// `μ_coarray · DOF + log det F` for a position list; `None` when the
/// positions are invalid or `F` is singular.
pub fn coarray_objective(
    positions: &[f64],
    scenario: &SourceScenario,
    aperture: f64,
    wavelength: f64,
    mu_coarray: f64,
) -> Option<f64> {
    let (dof, _) = dof_of(positions, wavelength, aperture)?;
    let ld = log_det_spd(&fim_exact_positions(positions, wavelength, scenario).ok()?);
    ld.is_finite().then(|| mu_coarray * dof as f64 + ld)
}

fn spacing_ok(positions: &[f64], moved: usize, d_min: f64) -> bool {
    let p = positions[moved];
    positions
        .iter()
        .enumerate()
        .all(|(j, &q)| j == moved || (p - q).abs() >= d_min)
}

/// Local search on `J = μ_coarray · DOF + log det F`.
///
/// Candidate moves for each element: jumps that create lag `M_c + 1` against
/// another element, snapping onto the `d0` grid relative to another element,
/// and small continuous nudges of `d0/4`, `d0/16`, `d0/64`. The best
/// strictly improving move is taken each pass provided the contiguous DOF
/// does not drop, spacing stays at least `d_min` and positions stay in
/// `[0, D]`. The result is sorted.
///
/// Until the contiguous half-length reaches `L` (the least the coarray
/// stage needs to estimate `L` sources), moves that lengthen it take
/// priority over `J`.
pub fn coarray_refine(
    positions: &[f64],
    scenario: &SourceScenario,
    aperture: f64,
    wavelength: f64,
    mu_coarray: f64,
    d_min: f64,
) -> Result<Vec<f64>> {
    if !(mu_coarray >= 0.0) {
        return Err(invalid(format!("mu_coarray must be nonnegative, got {mu_coarray}")));
    }
    let mut p = positions.to_vec();
    p.sort_by(f64::total_cmp);
    let has_gap_violation = p.windows(2).any(|w| w[1] - w[0] < d_min);
    if has_gap_violation {
        enforce_spacing(&mut p, d_min, aperture)?;
    }
    let d0 = wavelength / 2.0;
    let Some(mut j_cur) = coarray_objective(&p, scenario, aperture, wavelength, mu_coarray) else {
        return Ok(p);
    };
    let (mut dof_cur, mut mc) = dof_of(&p, wavelength, aperture).expect("valid start");
    let n = p.len();
    let needed = scenario.num_sources();

    for _ in 0..MAX_PASSES {
        let tier_cur = mc.min(needed);
        let mut best: Option<(usize, f64, usize, f64, usize, usize)> = None;
        for i in 0..n {
            let mut candidates = Vec::new();
            for j in 0..n {
                if j == i {
                    continue;
                }
                let jump = (mc + 1) as f64 * d0;
                candidates.push(p[j] + jump);
                candidates.push(p[j] - jump);
                candidates.push(p[j] + ((p[i] - p[j]) / d0).round() * d0);
            }
            for step in [d0 / 4.0, d0 / 16.0, d0 / 64.0] {
                candidates.push(p[i] + step);
                candidates.push(p[i] - step);
            }
            for c in candidates {
                if !(0.0..=aperture).contains(&c) || c == p[i] {
                    continue;
                }
                let old = p[i];
                p[i] = c;
                if spacing_ok(&p, i, d_min) {
                    if let (Some(jv), Some((dof, m))) = (
                        coarray_objective(&p, scenario, aperture, wavelength, mu_coarray),
                        dof_of(&p, wavelength, aperture),
                    ) {
                        let tier = m.min(needed);
                        let improves = tier > tier_cur || (tier == tier_cur && jv > j_cur + 1e-12 * j_cur.abs().max(1.0));
                        let better = best.as_ref().is_none_or(|b| (tier, jv) > (b.0, b.1));
                        if improves && dof >= dof_cur && better {
                            best = Some((tier, jv, i, c, dof, m));
                        }
                    }
                }
                p[i] = old;
            }
        }
        match best {
            Some((_, jv, i, c, dof, m)) => {
                p[i] = c;
                j_cur = jv;
                dof_cur = dof;
                mc = m;
            }
            None => break,
        }
    }
    p.sort_by(f64::total_cmp);
    Ok(p)
}

/// Contiguous-DOF cost of a minimum spacing constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct DofLoss {
    /// `unconstrained − constrained`.
    pub delta: usize,
    pub unconstrained: usize,
    /// Best DOF found under the constraint; 0 when `N·d_min > D`.
    pub constrained: usize,
    pub seeds: usize,
}

fn best_dof(n: usize, aperture: f64, wavelength: f64, d_min: f64, seeds: usize, seed: u64) -> Result<usize> {
    let d0 = wavelength / 2.0;
    if n as f64 * d_min > aperture {
        return Ok(0);
    }
    let scenario = SourceScenario::new(vec![0.0], vec![1.0], 1.0, 1)?;
    let mut rng = rng_from_seed(seed);
    let mut best = 0;
    for s in 0..seeds {
        let mut start: Vec<f64> = if s == 0 {
            let pitch = d0.max(d_min);
            (0..n).map(|i| (i as f64 * pitch).min(aperture)).collect()
        } else {
            (0..n).map(|_| rng.random::<f64>() * aperture).collect()
        };
        if enforce_spacing(&mut start, d_min, aperture).is_err() {
            continue;
        }
        let out = coarray_refine(&start, &scenario, aperture, wavelength, 1e3, d_min)?;
        if let Some((dof, _)) = dof_of(&out, wavelength, aperture) {
            best = best.max(dof);
        }
    }
    Ok(best)
}

/// Estimates the contiguous DOF lost to a minimum spacing `d_min` at fixed
/// `N` and `D`, by running [`coarray_refine`] (DOF-dominated weighting) from
/// `seeds` starting layouts with and without the constraint.
pub fn dof_loss_from_spacing(n: usize, aperture: f64, wavelength: f64, d_min: f64, seeds: usize, seed: u64) -> Result<DofLoss> {
    if !(d_min >= 0.0) {
        return Err(invalid(format!("d_min must be nonnegative, got {d_min}")));
    }
    if seeds == 0 {
        return Err(invalid("at least one seed is required"));
    }
    let unconstrained = best_dof(n, aperture, wavelength, 0.0, seeds, seed)?;
    let constrained = if d_min == 0.0 {
        unconstrained
    } else {
        best_dof(n, aperture, wavelength, d_min, seeds, seed)?
    };
    Ok(DofLoss {
        delta: unconstrained.saturating_sub(constrained),
        unconstrained,
        constrained,
        seeds,
    })
}
