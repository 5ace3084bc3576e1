//! Minimizers (Nelder-Mead, Davidon-Fletcher-Powell), finite-difference
//! derivatives, parameter transforms and the time-scale grid search.

mod dfp;
mod grid;
mod nelder_mead;
mod transform;

use std::io::Write;

use thiserror::Error;

pub use dfp::{dfp, dfp_with_gradient};
pub use grid::{grid_search_omega, OmegaScore, OmegaSearch, ScaleFamily};
pub use nelder_mead::{nelder_mead, nelder_mead_restarts};
pub use transform::{transform_params, untransform, ParamSpace};

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("objective is not finite at the starting point ({value})")]
    InvalidStart { value: f64 },

    #[error("invalid optimizer options: {0}")]
    Options(String),

    #[error("gradient is not finite at iteration {iteration}")]
    NanGradient { iteration: usize },

    #[error("line search stalled at iteration {iteration} after {backtracks} backtracks (f = {f}, |g| = {grad_norm})")]
    Stall {
        iteration: usize,
        backtracks: usize,
        x: Vec<f64>,
        f: f64,
        grad_norm: f64,
    },

    #[error("parameter {name} = {value} lies on the boundary of its transform")]
    Boundary { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct OptimOptions {
    pub max_iter: usize,
    /// Relative function tolerance.
    pub f_tol: f64,
    /// Relative step tolerance.
    pub x_tol: f64,
    /// Gradient infinity-norm tolerance (DFP).
    pub g_tol: f64,
    /// Relative finite-difference step; the absolute step is `fd_step * (1 + |x|)`.
    pub fd_step: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            max_iter: 1000,
            f_tol: 1e-10,
            x_tol: 1e-10,
            g_tol: 1e-8,
            fd_step: 1e-6,
        }
    }
}

impl OptimOptions {
    pub fn validate(&self) -> Result<(), OptimError> {
        if self.max_iter == 0 {
            return Err(OptimError::Options("max_iter must be at least 1".into()));
        }
        for (name, v) in [
            ("f_tol", self.f_tol),
            ("x_tol", self.x_tol),
            ("g_tol", self.g_tol),
            ("fd_step", self.fd_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(OptimError::Options(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x_min: Vec<f64>,
    pub f_min: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective value after each iteration, starting value first.
    pub trace: Vec<f64>,
}

impl OptimResult {
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# etas-trace v1")?;
        writeln!(out, "iteration,f")?;
        for (k, f) in self.trace.iter().enumerate() {
            writeln!(out, "{k},{f}")?;
        }
        Ok(())
    }
}

/// Central differences with step `step * (1 + |x_k|)`.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = step * (1.0 + x[k].abs());
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let dn = f(&probe);
            probe[k] = x[k];
            (up - dn) / (2.0 * h)
        })
        .collect()
}

/// Symmetric finite-difference Hessian from function values.
pub fn fd_hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], step: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| step * (1.0 + v.abs())).collect();
    let f0 = f(x);
    let mut p = x.to_vec();
    let mut eval = |shifts: &[(usize, f64)]| {
        for &(k, s) in shifts {
            p[k] += s;
        }
        let v = f(&p);
        for &(k, s) in shifts {
            p[k] -= s;
        }
        v
    };
    let mut hess = vec![vec![0.0; n]; n];
    for i in 0..n {
        let up = eval(&[(i, h[i])]);
        let dn = eval(&[(i, -h[i])]);
        hess[i][i] = (up - 2.0 * f0 + dn) / (h[i] * h[i]);
        for j in 0..i {
            let pp = eval(&[(i, h[i]), (j, h[j])]);
            let pm = eval(&[(i, h[i]), (j, -h[j])]);
            let mp = eval(&[(i, -h[i]), (j, h[j])]);
            let mm = eval(&[(i, -h[i]), (j, -h[j])]);
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    hess
}

/// Symmetrized central-difference Jacobian of a gradient.
pub fn fd_hessian_from_gradient<G: Fn(&[f64]) -> Vec<f64>>(grad: &G, x: &[f64], step: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    let mut p = x.to_vec();
    for k in 0..n {
        let h = step * (1.0 + x[k].abs());
        p[k] = x[k] + h;
        let up = grad(&p);
        p[k] = x[k] - h;
        let dn = grad(&p);
        p[k] = x[k];
        cols.push(up.iter().zip(&dn).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>());
    }
    let mut hess = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            hess[i][j] = 0.5 * (cols[j][i] + cols[i][j]);
        }
    }
    hess
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
