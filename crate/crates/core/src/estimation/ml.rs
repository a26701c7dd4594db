use crate::error::{invalid, Result};
use crate::fisher::SINGULAR_CONDITION;
use crate::geometry::ArrayGeometry;
use crate::linalg::{hermitian_condition, CMatrix};
use crate::optimize::{minimize_bounded, BoundedOptions};
use crate::signal::{steering_derivative, steering_matrix, CovarianceEstimate};

/// Perturbation applied when the steering matrix loses rank mid-search.
const RANK_NUDGE: f64 = 1e-6;

/// Outcome of the bounded ML search.
#[derive(Debug, Clone, PartialEq)]
pub struct MlRefinement {
    /// Sorted estimates, radians.
    pub theta: Vec<f64>,
    pub objective: f64,
    pub objective_at_coarse: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Parts {
    value: f64,
    a: CMatrix,
    pinv: CMatrix,
}

fn parts(r: &CovarianceEstimate, geom: &ArrayGeometry, theta: &[f64]) -> Option<Parts> {
    let a = steering_matrix(geom, theta);
    let gram = a.adjoint() * &a;
    if !(hermitian_condition(&gram) <= SINGULAR_CONDITION) {
        return None;
    }
    let inv = gram.cholesky()?.inverse();
    let pinv = inv * a.adjoint();
    let fitted = (&pinv * &r.matrix * &a).trace().re;
    Some(Parts {
        value: r.trace() - fitted,
        a,
        pinv,
    })
}

/// `tr{(I − P_A(θ)) R̂} = tr R̂ − tr{(AᴴA)⁻¹ Aᴴ R̂ A}`; `None` when `A(θ)`
/// is rank deficient.
pub fn ml_objective(r: &CovarianceEstimate, geom: &ArrayGeometry, theta: &[f64]) -> Option<f64> {
    parts(r, geom, theta).map(|p| p.value)
}

/// Analytic gradient `∂f/∂θ_ℓ = −2 Re[(A⁺ R̂ Π⊥ D)_ℓℓ]`.
pub fn ml_gradient(r: &CovarianceEstimate, geom: &ArrayGeometry, theta: &[f64]) -> Option<Vec<f64>> {
    let p = parts(r, geom, theta)?;
    Some(gradient_from(&p, r, geom, theta))
}

fn gradient_from(p: &Parts, r: &CovarianceEstimate, geom: &ArrayGeometry, theta: &[f64]) -> Vec<f64> {
    let n = geom.len();
    let d = steering_derivative(geom, theta);
    let proj = CMatrix::identity(n, n) - &p.a * &p.pinv;
    let m = &p.pinv * &r.matrix * proj * d;
    (0..theta.len()).map(|l| -2.0 * m[(l, l)].re).collect()
}

/// Objective and gradient, nudging `θ` by `10⁻⁶` rad per index when `A(θ)`
/// is rank deficient.
fn evaluate(r: &CovarianceEstimate, geom: &ArrayGeometry, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
    if let Some(p) = parts(r, geom, theta) {
        let g = gradient_from(&p, r, geom, theta);
        return Some((p.value, g));
    }
    let nudged: Vec<f64> = theta.iter().enumerate().map(|(i, t)| t + RANK_NUDGE * (i + 1) as f64).collect();
    let p = parts(r, geom, &nudged)?;
    let g = gradient_from(&p, r, geom, &nudged);
    Some((p.value, g))
}

/// Minimizes the concentrated ML criterion over the box `θ̃ ± δ` (clipped
/// to `(−90°, 90°)`) from `θ̃` and from two starts offset by one grating
/// period `λ / (D_phys cosθ)` (capped at `δ/2`) in each direction.
///
/// The returned objective never exceeds the value at `θ̃`.
pub fn local_ml_refine(
    r: &CovarianceEstimate,
    geom: &ArrayGeometry,
    theta_coarse: &[f64],
    delta: f64,
) -> Result<MlRefinement> {
    if theta_coarse.is_empty() {
        return Err(invalid("no coarse estimates to refine"));
    }
    if !(delta > 0.0) {
        return Err(invalid(format!("search radius must be positive, got {delta}")));
    }
    if r.dim() != geom.len() {
        return Err(invalid("covariance and geometry sizes differ"));
    }
    let edge = std::f64::consts::FRAC_PI_2 - 1e-6;
    let lower: Vec<f64> = theta_coarse.iter().map(|t| (t - delta).max(-edge)).collect();
    let upper: Vec<f64> = theta_coarse.iter().map(|t| (t + delta).min(edge)).collect();
    let start: Vec<f64> = theta_coarse.iter().zip(lower.iter().zip(&upper)).map(|(t, (lo, hi))| t.clamp(*lo, *hi)).collect();

    let aperture = geom.positions()[geom.len() - 1] - geom.positions()[0];
    let shift: Vec<f64> = start
        .iter()
        .map(|t| {
            let period = geom.wavelength() / (aperture.max(geom.d0()) * t.cos().max(1e-3));
            period.min(0.5 * delta)
        })
        .collect();
    let starts = [
        start.clone(),
        start.iter().zip(&shift).map(|(t, s)| t + s).collect::<Vec<_>>(),
        start.iter().zip(&shift).map(|(t, s)| t - s).collect::<Vec<_>>(),
    ];

    let scale = r.trace().abs().max(f64::MIN_POSITIVE) * geom.wavenumber() * aperture.max(geom.d0());
    // a step longer than a quarter period can hop into a neighbouring lobe
    let period = geom.wavelength() / aperture.max(geom.d0());
    let opts = BoundedOptions {
        max_iter: 200,
        gtol: 1e-10 * scale,
        max_step: 0.25 * period,
        ..Default::default()
    };
    let at_coarse = evaluate(r, geom, &start).map(|v| v.0).unwrap_or(f64::INFINITY);
    let mut best: Option<(Vec<f64>, f64, usize, bool)> = None;
    let mut total_iterations = 0;
    for s in starts.iter() {
        let res = minimize_bounded(|t| evaluate(r, geom, t), s, &lower, &upper, &opts);
        total_iterations += res.iterations;
        if !res.f.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| res.f < b.1) {
            best = Some((res.x, res.f, res.iterations, res.converged));
        }
    }
    let (mut theta, mut objective, converged) = match best {
        Some((x, f, _, c)) => (x, f, c),
        None => (start.clone(), at_coarse, false),
    };
    if objective > at_coarse {
        theta = start;
        objective = at_coarse;
    }
    theta.sort_by(f64::total_cmp);
    Ok(MlRefinement {
        theta,
        objective,
        objective_at_coarse: at_coarse,
        iterations: total_iterations,
        converged,
    })
}
