//! Box-constrained limited-memory quasi-Newton minimization and a bounded
//! golden-section search.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct BoundedOptions {
    pub max_iter: usize,
    /// Number of stored correction pairs.
    pub memory: usize,
    /// Stop when the projected gradient's max-norm falls below this.
    pub gtol: f64,
    /// Stop when the relative decrease of `f` falls below this.
    pub ftol: f64,
    /// Largest max-norm displacement tried in one line search.
    pub max_step: f64,
}

impl Default for BoundedOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            memory: 8,
            gtol: 1e-9,
            ftol: 1e-15,
            max_step: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundedResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((xi, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        *xi = xi.clamp(lo, hi);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Components of the gradient that would move a variable further into an
/// active bound are zeroed.
fn projected_gradient(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            if (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0) {
                0.0
            } else {
                g[i]
            }
        })
        .collect()
}

/// Minimizes `f` over the box `[lower, upper]`.
///
/// `f` returns the value and gradient, or `None` where it cannot be evaluated
/// (treated as `+∞` by the line search). The returned point is never worse
/// than the projected start.
pub fn minimize_bounded<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &BoundedOptions) -> BoundedResult
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    assert!(lower.len() == n && upper.len() == n, "bounds must match the dimension");
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = match f(&x) {
        Some(v) if v.0.is_finite() => v,
        _ => {
            return BoundedResult {
                x,
                f: f64::INFINITY,
                iterations: 0,
                converged: false,
            }
        }
    };
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();

    for iter in 0..opts.max_iter {
        let pg = projected_gradient(&x, &g, lower, upper);
        if pg.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= opts.gtol {
            return BoundedResult {
                x,
                f: fx,
                iterations: iter,
                converged: true,
            };
        }
        let free: Vec<bool> = (0..n).map(|i| pg[i] != 0.0 || g[i] == 0.0).collect();

        // two-loop recursion restricted to the free variables
        let mut q: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..n {
                q[i] += (a - b) * s[i];
            }
        }
        let mut d: Vec<f64> = (0..n).map(|i| if free[i] { -q[i] } else { 0.0 }).collect();
        if dot(&d, &pg) >= 0.0 {
            history.clear();
            d = pg.iter().map(|v| -v).collect();
        }
        let slope = dot(&d, &pg);

        // backtracking along the projected path
        let norm = d.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let mut step = if history.is_empty() { (1.0f64).min(1.0 / norm) } else { 1.0 };
        step = step.min(opts.max_step / norm);
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            project(&mut trial, lower, upper);
            if let Some((ft, gt)) = f(&trial) {
                let moved: f64 = dot(&pg, &trial.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>());
                if ft.is_finite() && ft <= fx + 1e-4 * moved.min(step * slope).min(0.0) {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        // no decrease along a descent direction: stationary to working precision
        let Some((xn, fnew, gn)) = accepted else {
            return BoundedResult {
                x,
                f: fx,
                iterations: iter,
                converged: true,
            };
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            history.push_back((s, y, 1.0 / sy));
            if history.len() > opts.memory {
                history.pop_front();
            }
        }
        let decrease = fx - fnew;
        x = xn;
        g = gn;
        let previous = fx;
        fx = fnew;
        if decrease <= opts.ftol * previous.abs().max(1.0) {
            return BoundedResult {
                x,
                f: fx,
                iterations: iter + 1,
                converged: true,
            };
        }
    }
    BoundedResult {
        x,
        f: fx,
        iterations: opts.max_iter,
        converged: false,
    }
}

/// Central-difference gradient with absolute step `h`.
pub fn central_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let up = f(&xp);
            xp[i] = x[i] - h;
            let down = f(&xp);
            xp[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Maximizes a unimodal `f` on `[a, b]` by golden-section search; returns
/// `(argmax, max)`.
pub fn golden_section_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Some((f, g))
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let opts = BoundedOptions {
            max_iter: 500,
            ..Default::default()
        };
        let r = minimize_bounded(rosenbrock, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &opts);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r);
    }

    #[test]
    fn active_bound() {
        // minimum of (x-3)² + (y+1)² on [0,2]×[0,2] is at (2, 0)
        let f = |x: &[f64]| Some(((x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2), vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 1.0)]));
        let r = minimize_bounded(f, &[1.0, 1.0], &[0.0, 0.0], &[2.0, 2.0], &BoundedOptions::default());
        assert!(r.converged);
        assert_eq!(r.x, vec![2.0, 0.0]);
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| if x[0] > 0.5 { None } else { Some((x[0] * x[0] - x[0], vec![2.0 * x[0] - 1.0])) };
        let r = minimize_bounded(f, &[0.0], &[-1.0], &[1.0], &BoundedOptions::default());
        assert!(r.f <= 0.0);
        assert!(r.x[0] <= 0.5);
    }

    #[test]
    fn step_cap_limits_each_move() {
        let mut trail = Vec::new();
        let f = |x: &[f64]| {
            trail.push(x[0]);
            Some(((x[0] - 10.0).powi(2), vec![2.0 * (x[0] - 10.0)]))
        };
        let opts = BoundedOptions {
            max_step: 0.5,
            ..Default::default()
        };
        let r = minimize_bounded(f, &[0.0], &[-20.0], &[20.0], &opts);
        assert!((r.x[0] - 10.0).abs() < 1e-6);
        assert!(trail.windows(2).all(|w| (w[1] - w[0]).abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn golden_section() {
        let (x, v) = golden_section_max(|x| -(x - 0.3).powi(2), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        assert!(v <= 0.0 && v > -1e-15);
    }

    #[test]
    fn numeric_gradient() {
        let g = central_gradient(|x| x[0].sin() * x[1], &[0.4, 2.0], 1e-6);
        assert!((g[0] - 0.4f64.cos() * 2.0).abs() < 1e-8);
        assert!((g[1] - 0.4f64.sin()).abs() < 1e-8);
    }
}
