//! Davidon-Fletcher-Powell quasi-Newton minimization.

use super::{dot, fd_gradient, inf_norm, OptimError, OptimOptions, OptimResult};

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 50;
/// Longest trial step, in the optimizer's coordinates.
const MAX_STEP: f64 = 1.0;

/// DFP with central finite-difference gradients.
pub fn dfp<F: Fn(&[f64]) -> f64>(objective: F, x0: &[f64], opts: &OptimOptions) -> Result<OptimResult, OptimError> {
    let step = opts.fd_step;
    dfp_with_gradient(&objective, |x: &[f64]| fd_gradient(&objective, x, step), x0, opts)
}

/// DFP with a caller-supplied gradient.
///
/// The inverse Hessian starts at the identity, is rescaled by `s'y / y'y`
/// before the first update, and is reset whenever it stops producing a
/// descent direction. Steps come from Armijo backtracking followed by one
/// quadratic-interpolation refinement, which makes the line search exact on
/// quadratics.
pub fn dfp_with_gradient<F, G>(objective: F, gradient: G, x0: &[f64], opts: &OptimOptions) -> Result<OptimResult, OptimError>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
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

    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(OptimError::InvalidStart { value: fx });
    }
    let mut g = gradient(&x);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(OptimError::NanGradient { iteration: 0 });
    }
    let mut h = identity(n);
    let mut updated = false;
    let mut trace = vec![fx];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if inf_norm(&g) <= opts.g_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut d = matvec(&h, &g).iter().map(|v| -v).collect::<Vec<f64>>();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = identity(n);
            updated = false;
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let norm = dot(&d, &d).sqrt();
        if norm > MAX_STEP {
            d.iter_mut().for_each(|v| *v *= MAX_STEP / norm);
            slope *= MAX_STEP / norm;
        }

        let trial = |a: f64| -> Vec<f64> { x.iter().zip(&d).map(|(xi, di)| xi + a * di).collect() };
        let mut a = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let xt = trial(a);
            if xt == x {
                break;
            }
            let ft = f(&xt);
            if ft.is_finite() && ft <= fx + ARMIJO * a * slope {
                accepted = Some((a, xt, ft));
                break;
            }
            a = if ft.is_finite() {
                let a_q = -slope * a * a / (2.0 * (ft - fx - slope * a));
                a_q.clamp(0.1 * a, 0.5 * a)
            } else {
                0.5 * a
            };
        }
        let Some((a_ok, mut x_new, mut f_new)) = accepted else {
            return Err(OptimError::Stall {
                iteration: iterations,
                backtracks: MAX_BACKTRACKS,
                grad_norm: inf_norm(&g),
                x,
                f: fx,
            });
        };
        // one quadratic fit through f(0), f'(0) and f(a)
        let curv = f_new - fx - slope * a_ok;
        if curv > 0.0 {
            let a_q = -slope * a_ok * a_ok / (2.0 * curv);
            if a_q > 0.0 && a_q <= 4.0 * a_ok && (a_q - a_ok).abs() > 1e-3 * a_ok {
                let xq = trial(a_q);
                let fq = f(&xq);
                if fq < f_new {
                    x_new = xq;
                    f_new = fq;
                }
            }
        }

        let g_new = gradient(&x_new);
        if g_new.iter().any(|v| !v.is_finite()) {
            return Err(OptimError::NanGradient { iteration: iterations });
        }
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let f_change = fx - f_new;
        let x_scale = 1.0 + inf_norm(&x);

        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if !updated {
                let scale = sy / dot(&y, &y);
                h.iter_mut().flatten().for_each(|v| *v *= scale);
            }
            let hy = matvec(&h, &y);
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += s[i] * s[j] / sy - hy[i] * hy[j] / yhy;
                }
            }
            updated = true;
        } else {
            // curvature condition failed: the metric is stale
            h = identity(n);
            updated = false;
        }

        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(fx);

        if f_change <= opts.f_tol * (fx.abs() + 1e-12) || inf_norm(&s) <= opts.x_tol * x_scale {
            converged = true;
            break;
        }
    }
    if !converged && inf_norm(&g) <= opts.g_tol {
        converged = true;
    }

    Ok(OptimResult {
        x_min: x,
        f_min: fx,
        iterations,
        evaluations: evals,
        converged,
        trace,
    })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn quadratic_converges_in_few_iterations() {
        let q = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let f = |x: &[f64]| 0.5 * (0..3).map(|i| (0..3).map(|j| x[i] * q[i][j] * x[j]).sum::<f64>()).sum::<f64>();
        let grad = |x: &[f64]| (0..3).map(|i| (0..3).map(|j| q[i][j] * x[j]).sum()).collect::<Vec<f64>>();
        let x0 = [0.3, -0.4, 0.2];
        let opts = OptimOptions {
            f_tol: 1e-300,
            x_tol: 1e-300,
            ..Default::default()
        };
        let r = dfp_with_gradient(f, grad, &x0, &opts).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 5, "{} iterations", r.iterations);
        assert!(inf_norm(&grad(&r.x_min)) < 1e-8);

        let fd = dfp(f, &x0, &opts).unwrap();
        assert!(fd.iterations <= 5, "{} iterations", fd.iterations);
        assert!(inf_norm(&grad(&fd.x_min)) < 1e-8);
    }

    #[test]
    fn rosenbrock_minimum() {
        let opts = OptimOptions {
            f_tol: 1e-16,
            ..Default::default()
        };
        let r = dfp(rosenbrock, &[-1.2, 1.0], &opts).unwrap();
        assert!((r.x_min[0] - 1.0).abs() < 1e-5 && (r.x_min[1] - 1.0).abs() < 1e-5, "{:?}", r.x_min);
    }

    #[test]
    fn deterministic() {
        let a = dfp(rosenbrock, &[-1.2, 1.0], &OptimOptions::default()).unwrap();
        let b = dfp(rosenbrock, &[-1.2, 1.0], &OptimOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stall_carries_best_point() {
        // a gradient that points the wrong way defeats every backtrack
        let r = dfp_with_gradient(|x: &[f64]| x[0] * x[0], |x: &[f64]| vec![-2.0 * x[0] - 1.0], &[1.0], &OptimOptions::default());
        match r {
            Err(OptimError::Stall { x, f, .. }) => {
                assert_eq!(x, vec![1.0]);
                assert_eq!(f, 1.0);
            }
            other => panic!("expected stall, got {other:?}"),
        }
    }

    #[test]
    fn nan_gradient_reported() {
        let r = dfp_with_gradient(|x: &[f64]| x[0] * x[0], |_: &[f64]| vec![f64::NAN], &[1.0], &OptimOptions::default());
        assert!(matches!(r, Err(OptimError::NanGradient { iteration: 0 })));
    }
}
