//! Nelder-Mead downhill simplex.

use super::{OptimError, OptimOptions, OptimResult};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
const INIT_STEP: f64 = 0.1;

/// Minimizes `objective` from `x0`. The initial simplex adds `0.1` to each
/// coordinate in turn; NaN values are treated as `+inf`.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(objective: F, x0: &[f64], opts: &OptimOptions) -> Result<OptimResult, OptimError> {
    opts.validate()?;
    let n = x0.len();
    let mut evals = 0usize;
    let mut f = |x: &[f64]| {
        evals += 1;
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let f0 = f(x0);
    if !f0.is_finite() {
        return Err(OptimError::InvalidStart { value: objective(x0) });
    }

    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    let mut vals = vec![f0];
    for k in 0..n {
        let mut x = x0.to_vec();
        x[k] += INIT_STEP;
        vals.push(f(&x));
        pts.push(x);
    }

    let mut trace = vec![f0];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        // order best to worst; ties keep earlier vertices first
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&k| pts[k].clone()).collect();
        vals = order.iter().map(|&k| vals[k]).collect();

        let spread = vals[n] - vals[0];
        if spread <= opts.f_tol * (vals[0].abs() + 1e-12) {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n).map(|d| pts[..n].iter().map(|p| p[d]).sum::<f64>() / n as f64).collect();
        let along = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[n])
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let xr = along(REFLECT);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(EXPAND);
            let fe = f(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc, accept) = if fr < vals[n] {
                let xc = along(REFLECT * CONTRACT);
                let fc = f(&xc);
                (xc, fc, fc <= fr)
            } else {
                let xc = along(-CONTRACT);
                let fc = f(&xc);
                (xc, fc, fc < vals[n])
            };
            if accept {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for k in 1..=n {
                    let shrunk: Vec<f64> = pts[0].iter().zip(&pts[k]).map(|(b, x)| b + SHRINK * (x - b)).collect();
                    vals[k] = f(&shrunk);
                    pts[k] = shrunk;
                }
            }
        }
        trace.push(vals.iter().cloned().fold(f64::INFINITY, f64::min));
    }

    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    Ok(OptimResult {
        x_min: pts[best].clone(),
        f_min: vals[best],
        iterations,
        evaluations: evals,
        converged,
        trace,
    })
}

/// Restarts Nelder-Mead from its own optimum until a restart improves the
/// objective by no more than `f_tol`, at most `max_restarts` times.
pub fn nelder_mead_restarts<F: Fn(&[f64]) -> f64>(
    objective: F,
    x0: &[f64],
    opts: &OptimOptions,
    max_restarts: usize,
) -> Result<OptimResult, OptimError> {
    let mut best = nelder_mead(&objective, x0, opts)?;
    for _ in 0..max_restarts {
        let next = nelder_mead(&objective, &best.x_min, opts)?;
        let gain = best.f_min - next.f_min;
        let done = gain <= opts.f_tol * (best.f_min.abs() + 1e-12);
        let mut trace = std::mem::take(&mut best.trace);
        trace.extend(next.trace.iter().skip(1));
        let evaluations = best.evaluations + next.evaluations;
        let iterations = best.iterations + next.iterations;
        if next.f_min <= best.f_min {
            best = next;
        }
        best.trace = trace;
        best.evaluations = evaluations;
        best.iterations = iterations;
        if done {
            break;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn quadratic_bowl() {
        let r = nelder_mead(|x| x.iter().map(|v| (v - 3.0).powi(2)).sum(), &[0.0; 3], &OptimOptions::default()).unwrap();
        assert!(r.converged);
        for v in &r.x_min {
            assert!((v - 3.0).abs() < 1e-4, "{v}");
        }
    }

    #[test]
    fn rosenbrock_valley() {
        let opts = OptimOptions {
            f_tol: 1e-14,
            ..Default::default()
        };
        let r = nelder_mead(rosenbrock, &[-1.2, 1.0], &opts).unwrap();
        assert!((r.x_min[0] - 1.0).abs() < 1e-3 && (r.x_min[1] - 1.0).abs() < 1e-3, "{:?}", r.x_min);
    }

    #[test]
    fn constant_objective_converges_at_start() {
        let r = nelder_mead(|_| 4.0, &[1.0, 2.0], &OptimOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.x_min, vec![1.0, 2.0]);
    }

    #[test]
    fn nan_start_rejected_and_cap_reported() {
        assert!(matches!(
            nelder_mead(|_| f64::NAN, &[0.0], &OptimOptions::default()),
            Err(OptimError::InvalidStart { .. })
        ));
        let opts = OptimOptions {
            max_iter: 3,
            ..Default::default()
        };
        let r = nelder_mead(rosenbrock, &[-1.2, 1.0], &opts).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }

    #[test]
    fn trace_is_nonincreasing_and_matches_minimum() {
        let r = nelder_mead(rosenbrock, &[-1.2, 1.0], &OptimOptions::default()).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(rosenbrock(&r.x_min), r.f_min);
    }
}
