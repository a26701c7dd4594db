use super::{DesignConfig, DesignMeasure};
use crate::error::{invalid, Error, Result};
use crate::fisher::{fim_exact_positions, log_det_spd};
use crate::optimize::{central_gradient, minimize_bounded, BoundedOptions};
use crate::signal::SourceScenario;

fn check_feasible(n: usize, d_min: f64, aperture: f64) -> Result<()> {
    if !(d_min >= 0.0) {
        return Err(invalid(format!("d_min must be nonnegative, got {d_min}")));
    }
    if n as f64 * d_min > aperture {
        return Err(Error::InfeasibleSpacing(format!(
            "{n} elements at spacing {d_min} do not fit in aperture {aperture}"
        )));
    }
    Ok(())
}

/// Sorts and moves positions the least needed (forward then backward sweep)
/// so that consecutive gaps are at least `d_min` and all lie in `[0, D]`.
pub fn enforce_spacing(positions: &mut [f64], d_min: f64, aperture: f64) -> Result<()> {
    check_feasible(positions.len(), d_min, aperture)?;
    positions.sort_by(f64::total_cmp);
    let n = positions.len();
    if n == 0 {
        return Ok(());
    }
    positions[0] = positions[0].clamp(0.0, aperture);
    for i in 1..n {
        if positions[i] - positions[i - 1] < d_min {
            positions[i] = positions[i - 1] + d_min;
            while positions[i] - positions[i - 1] < d_min {
                positions[i] = positions[i].next_up();
            }
        }
    }
    if positions[n - 1] > aperture {
        positions[n - 1] = aperture;
    }
    for i in (0..n - 1).rev() {
        if positions[i + 1] - positions[i] < d_min {
            positions[i] = positions[i + 1] - d_min;
            while positions[i + 1] - positions[i] < d_min {
                positions[i] = positions[i].next_down();
            }
        }
    }
    if positions[0] < 0.0 {
        return Err(Error::InfeasibleSpacing(format!(
            "could not place {n} elements at spacing {d_min} inside aperture {aperture}"
        )));
    }
    Ok(())
}

/// Rounds a design measure to `N` positions.
///
/// Atoms closer than `d0/10` are merged (weight-averaged), element counts are
/// allotted by largest remainder of `weight·N`, each cluster is spread at
/// pitch `d_min` around its center and shifted into `[0, D]`, and remaining
/// overlaps are resolved by [`enforce_spacing`].
pub fn extract_positions(xi: &DesignMeasure, n: usize, d_min: f64) -> Result<Vec<f64>> {
    if xi.atoms.is_empty() {
        return Err(invalid("design measure has no atoms"));
    }
    if n == 0 {
        return Err(invalid("N must be positive"));
    }
    let aperture = xi.aperture;
    check_feasible(n, d_min, aperture)?;
    let merge = xi.wavelength / 2.0 / 10.0;

    let mut clusters: Vec<(f64, f64)> = xi.atoms.clone();
    clusters.sort_by(|a, b| a.0.total_cmp(&b.0));
    loop {
        let closest = clusters
            .windows(2)
            .enumerate()
            .map(|(i, w)| (i, w[1].0 - w[0].0))
            .filter(|&(_, gap)| gap < merge)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((i, _)) = closest else { break };
        let (p, w) = clusters[i];
        let (q, v) = clusters.remove(i + 1);
        clusters[i] = if w + v > 0.0 { ((p * w + q * v) / (w + v), w + v) } else { (0.5 * (p + q), 0.0) };
    }

    let total: f64 = clusters.iter().map(|c| c.1).sum();
    let quotas: Vec<f64> = clusters.iter().map(|c| c.1 / total * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..clusters.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(clusters[b].1.total_cmp(&clusters[a].1)).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }

    let mut positions = Vec::with_capacity(n);
    for (&(center, _), &m) in clusters.iter().zip(&counts) {
        if m == 0 {
            continue;
        }
        let half = 0.5 * (m as f64 - 1.0);
        let mut block: Vec<f64> = (0..m).map(|i| center + (i as f64 - half) * d_min).collect();
        let lo = block[0];
        let hi = block[m - 1];
        let shift = if lo < 0.0 {
            -lo
        } else if hi > aperture {
            aperture - hi
        } else {
            0.0
        };
        block.iter_mut().for_each(|p| *p = (*p + shift).clamp(0.0, aperture));
        positions.extend(block);
    }
    enforce_spacing(&mut positions, d_min, aperture)?;
    Ok(positions)
}

/// `Σ_{i<j} max(0, d_min − |p_i − p_j|)²`.
pub fn spacing_penalty(positions: &[f64], d_min: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let v = d_min - (positions[i] - positions[j]).abs();
            if v > 0.0 {
                total += v * v;
            }
        }
    }
    total
}

/// Gradient of [`spacing_penalty`]; coincident pairs contribute zero.
pub fn spacing_penalty_gradient(positions: &[f64], d_min: f64) -> Vec<f64> {
    let n = positions.len();
    let mut g = vec![0.0; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = positions[i] - positions[j];
            let v = d_min - diff.abs();
            if v > 0.0 && diff != 0.0 {
                let d = -2.0 * v * diff.signum();
                g[i] += d;
                g[j] -= d;
            }
        }
    }
    g
}

/// `log det F(p) − μ_sp · Σ max(0, d_min − |p_i − p_j|)²` with the exact
/// Fisher information.
pub fn spacing_penalized_objective(
    positions: &[f64],
    scenario: &SourceScenario,
    wavelength: f64,
    d_min: f64,
    mu_sp: f64,
) -> Result<f64> {
    let f = fim_exact_positions(positions, wavelength, scenario)?;
    Ok(log_det_spd(&f) - mu_sp * spacing_penalty(positions, d_min))
}

fn log_det_at(positions: &[f64], scenario: &SourceScenario, wavelength: f64) -> f64 {
    fim_exact_positions(positions, wavelength, scenario)
        .map(|f| log_det_spd(&f))
        .unwrap_or(f64::NEG_INFINITY)
}

/// Bounded quasi-Newton ascent of [`spacing_penalized_objective`] from
/// `start`, followed by an exact spacing sweep. Never returns a point with a
/// lower objective than the (spacing-enforced) start.
pub fn polish(start: &[f64], scenario: &SourceScenario, aperture: f64, config: &DesignConfig) -> Result<Vec<f64>> {
    let lambda = config.wavelength;
    let (d_min, mu) = (config.d_min, config.mu_sp);
    let mut x0 = start.to_vec();
    enforce_spacing(&mut x0, d_min, aperture)?;
    let objective = |p: &[f64]| {
        let ld = log_det_at(p, scenario, lambda);
        ld - mu * spacing_penalty(p, d_min)
    };
    let h = 1e-6 * lambda;
    let negated = |p: &[f64]| {
        let ld = log_det_at(p, scenario, lambda);
        if !ld.is_finite() {
            return None;
        }
        let mut g = central_gradient(|q| log_det_at(q, scenario, lambda), p, h);
        let pg = spacing_penalty_gradient(p, d_min);
        for (gi, pi) in g.iter_mut().zip(pg) {
            *gi = -(*gi) + mu * pi;
        }
        Some((-(ld - mu * spacing_penalty(p, d_min)), g))
    };
    let n = x0.len();
    let opts = BoundedOptions {
        max_iter: 300,
        gtol: 1e-8,
        ..Default::default()
    };
    let r = minimize_bounded(negated, &x0, &vec![0.0; n], &vec![aperture; n], &opts);
    let mut best = r.x;
    enforce_spacing(&mut best, d_min, aperture)?;
    if objective(&best) >= objective(&x0) {
        Ok(best)
    } else {
        Ok(x0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::min_spacing;

    #[test]
    fn two_endpoint_atoms() {
        let d0 = 0.5;
        let d = 40.0 * d0;
        let xi = DesignMeasure::new(vec![(0.0, 0.5), (d, 0.5)], 1.0, d).unwrap();
        let p = extract_positions(&xi, 6, 0.4 * d0).unwrap();
        let expect = [0.0, 0.2, 0.4, d - 0.4, d - 0.2, d];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{p:?}");
        }
        assert!(min_spacing(&p) >= 0.4 * d0);
    }

    #[test]
    fn single_atom_pair() {
        let xi = DesignMeasure::new(vec![(3.0, 1.0)], 1.0, 10.0).unwrap();
        let p = extract_positions(&xi, 2, 0.2).unwrap();
        assert!((p[0] - 2.9).abs() < 1e-12 && (p[1] - 3.1).abs() < 1e-12);
    }

    #[test]
    fn infeasible_spacing() {
        let xi = DesignMeasure::new(vec![(0.5, 1.0)], 1.0, 1.0).unwrap();
        assert!(matches!(extract_positions(&xi, 6, 0.2), Err(Error::InfeasibleSpacing(_))));
    }

    #[test]
    fn close_atoms_merge_and_counts_follow_weights() {
        let xi = DesignMeasure::new(vec![(0.0, 0.3), (0.01, 0.2), (10.0, 0.5)], 1.0, 10.0).unwrap();
        let p = extract_positions(&xi, 4, 0.0).unwrap();
        assert_eq!(p.iter().filter(|&&x| x < 1.0).count(), 2);
        assert!((p[0] - 0.004).abs() < 1e-12);
    }

    #[test]
    fn spacing_sweep_is_exact() {
        let mut p = vec![0.3, 0.1, 0.1000001, 0.2, 0.95, 1.0];
        enforce_spacing(&mut p, 1.0 / 6.0, 1.0).unwrap();
        assert!(p.windows(2).all(|w| w[1] - w[0] >= 1.0 / 6.0));
        assert!(p[0] >= 0.0 && p[5] <= 1.0);
    }

    #[test]
    fn penalty_values_and_gradient() {
        let d0 = 0.5;
        assert_eq!(spacing_penalty(&[0.0, 1.0, 2.0], 0.2), 0.0);
        let v = 1e8 * spacing_penalty(&[1.0, 1.0, 3.0], 0.4 * d0);
        assert!((v - 1e8 * (0.4 * d0) * (0.4 * d0)).abs() < 1e-6);

        let p = [0.0, 0.05, 0.31, 0.4, 2.0];
        let g = spacing_penalty_gradient(&p, 0.2);
        let fd = central_gradient(|q| spacing_penalty(q, 0.2), &p, 1e-7);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3), "{g:?} vs {fd:?}");
        }
    }

    #[test]
    fn polish_never_loses_and_keeps_spacing() {
        let c = DesignConfig::new(1.0);
        let s = SourceScenario::equal_power_deg(&[10.0, 25.0], 10.0, 500).unwrap();
        let d = 10.0;
        let start = vec![0.0, 0.2, 0.4, 9.6, 9.8, 10.0];
        let out = polish(&start, &s, d, &c).unwrap();
        let before = spacing_penalized_objective(&start, &s, 1.0, c.d_min, c.mu_sp).unwrap();
        let after = spacing_penalized_objective(&out, &s, 1.0, c.d_min, c.mu_sp).unwrap();
        assert!(after >= before);
        assert!(min_spacing(&out) >= c.d_min);
        assert!(out.iter().all(|&p| (0.0..=d).contains(&p)));
    }
}
