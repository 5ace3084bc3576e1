//! Triggering probabilities, the iterative stochastic declustering fit and
//! background / triggered classification.
//!
//! Each outer iteration (1) computes the probability that every event is a
//! background event or was triggered by each predecessor, (2) re-smooths the
//! background field with the background probabilities as weights, and
//! (3) refits the parameters by maximum likelihood against that field.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{EtasError, Result};
use crate::intensity::{smooth_background, BackgroundField, BandwidthConfig};
use crate::likelihood::{aic, LikelihoodContext, LogLik, SpatialMass, Variant};
use crate::model::{branching_ratio, magnitude_mle_exponential, magnitude_mle_gamma, EtasParams, MagnitudeModel, ParamName};
use crate::optimize::{
    dfp_with_gradient, fd_gradient, fd_hessian, fd_hessian_from_gradient, nelder_mead, OptimError, OptimOptions, ParamSpace,
};

/// Entries below this are dropped from a row while the dropped mass stays
/// under [`ROW_TRUNCATION_BUDGET`].
const ENTRY_CUTOFF: f64 = 1e-12;
const ROW_TRUNCATION_BUDGET: f64 = 1e-11;

/// Background and triggering probabilities for every event.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerProbs {
    /// Row `j`: `(i, p_ij)` for predecessors with `t_i < t_j`.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Probability that event `j` was triggered, summed over every parent.
    pub p: Vec<f64>,
    pub bg: Vec<f64>,
    /// Mass of the entries dropped from each row.
    pub truncated: Vec<f64>,
}

impl TriggerProbs {
    pub fn len(&self) -> usize {
        self.bg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bg.is_empty()
    }

    /// `bg_j + sum_i p_ij` over the stored entries.
    pub fn row_total(&self, j: usize) -> f64 {
        self.bg[j] + self.rows[j].iter().map(|(_, p)| p).sum::<f64>()
    }

    /// Sparse `j,i,p` listing.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# etas-probs v1")?;
        writeln!(out, "j,i,p")?;
        for (j, row) in self.rows.iter().enumerate() {
            for (i, p) in row {
                writeln!(out, "{j},{i},{p}")?;
            }
        }
        Ok(())
    }
}

/// Declustering probabilities under the space-time model.
pub fn trigger_probs(cat: &Catalog, params: &EtasParams, bg: &BackgroundField) -> Result<TriggerProbs> {
    let ctx = LikelihoodContext::new(cat, Some(bg), Variant::SpatioTemporal, SpatialMass::Infinite)?;
    trigger_probs_in(&ctx, params)
}

/// Declustering probabilities for any likelihood context (the ground variant
/// gives purely temporal probabilities).
pub fn trigger_probs_in(ctx: &LikelihoodContext, params: &EtasParams) -> Result<TriggerProbs> {
    params.validate()?;
    let rows: Vec<Result<(Vec<(usize, f64)>, f64, f64, f64)>> = (0..ctx.len())
        .into_par_iter()
        .map(|j| {
            let mut terms = Vec::new();
            let lam = ctx.intensity_at(params, j, |i, v| terms.push((i, v)));
            if !(lam > 0.0) || !lam.is_finite() {
                return Err(EtasError::ZeroIntensity { event: j, value: lam });
            }
            let bg = params.mu * ctx.background_at(j) / lam;
            let mut probs: Vec<(usize, f64)> = terms.into_iter().map(|(i, v)| (i, v / lam)).collect();
            let triggered: f64 = probs.iter().map(|(_, p)| p).sum();
            let mut small: Vec<(usize, f64)> = probs.iter().copied().filter(|(_, p)| *p < ENTRY_CUTOFF).collect();
            small.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let mut dropped = 0.0;
            let mut cut = Vec::new();
            for (i, p) in small {
                if dropped + p > ROW_TRUNCATION_BUDGET {
                    break;
                }
                dropped += p;
                cut.push(i);
            }
            if !cut.is_empty() {
                cut.sort_unstable();
                probs.retain(|(i, _)| cut.binary_search(i).is_err());
            }
            Ok((probs, triggered, bg, dropped))
        })
        .collect();
    let mut out = TriggerProbs {
        rows: Vec::with_capacity(rows.len()),
        p: Vec::with_capacity(rows.len()),
        bg: Vec::with_capacity(rows.len()),
        truncated: Vec::with_capacity(rows.len()),
    };
    for row in rows {
        let (r, p, bg, dropped) = row?;
        out.rows.push(r);
        out.p.push(p);
        out.bg.push(bg);
        out.truncated.push(dropped);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Dfp,
    NelderMead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeKind {
    #[default]
    Exponential,
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Closed-form derivatives of the log-likelihood.
    #[default]
    Analytic,
    /// Central differences on the objective.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub variant: Variant,
    pub magnitude: MagnitudeKind,
    pub optimizer: OptimizerKind,
    pub gradient: GradientMode,
    pub spatial_mass: SpatialMass,
    pub fixed: Vec<ParamName>,
    pub bandwidth: BandwidthConfig,
    pub optim: OptimOptions,
    /// Cap on declustering iterations.
    pub max_outer: usize,
    /// Stop once no background probability moves more than this.
    pub bg_tol: f64,
    /// Stop once the log-likelihood changes less than this.
    pub ll_tol: f64,
    /// Branching ratio supercritical iterates are pulled back to.
    pub projection_ratio: f64,
    pub compute_stderr: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            variant: Variant::SpatioTemporal,
            magnitude: MagnitudeKind::Exponential,
            optimizer: OptimizerKind::Dfp,
            gradient: GradientMode::Analytic,
            spatial_mass: SpatialMass::Infinite,
            fixed: Vec::new(),
            bandwidth: BandwidthConfig::default(),
            optim: OptimOptions::default(),
            max_outer: 50,
            bg_tol: 1e-3,
            ll_tol: 1e-4,
            projection_ratio: 0.99,
            compute_stderr: true,
        }
    }
}

/// One declustering iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub iteration: usize,
    /// Space-time log-likelihood after the refit.
    pub l2: f64,
    /// Largest background-probability change against the previous iteration.
    pub max_bg_change: Option<f64>,
    pub optimizer_iterations: usize,
    pub optimizer_converged: bool,
}

/// Standard errors for the free parameters and the magnitude model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdErrors {
    pub params: Vec<(ParamName, f64)>,
    pub magnitude: Vec<(String, f64)>,
}

impl StdErrors {
    pub fn get(&self, name: ParamName) -> Option<f64> {
        self.params.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: EtasParams,
    pub magnitude: MagnitudeModel,
    pub loglik: LogLik,
    pub aic: f64,
    /// Free parameters counted by the AIC.
    pub n_params: usize,
    pub branching_ratio: Option<f64>,
    pub probs: TriggerProbs,
    pub background: BackgroundField,
    pub iterations: usize,
    pub converged: bool,
    pub stderr: Option<StdErrors>,
    pub stderr_note: Option<String>,
    pub fixed: Vec<ParamName>,
    pub trace: Vec<OuterStep>,
    pub warnings: Vec<String>,
    pub options: FitOptions,
}

impl FitResult {
    /// Expected number of background events `mu * T * int_S u`.
    pub fn background_count(&self, cat: &Catalog) -> f64 {
        self.params.mu * cat.duration() * self.background.region_integral()
    }

    /// Background rate per day over the region.
    pub fn background_rate(&self) -> f64 {
        self.params.mu * self.background.region_integral()
    }
}

fn fit_magnitude(cat: &Catalog, kind: MagnitudeKind) -> Result<MagnitudeModel> {
    Ok(match kind {
        MagnitudeKind::Exponential => MagnitudeModel::Exponential {
            beta: magnitude_mle_exponential(cat)?,
        },
        MagnitudeKind::Gamma => {
            let (shape, rate) = magnitude_mle_gamma(cat)?;
            MagnitudeModel::Gamma { shape, rate }
        }
    })
}

struct InnerFit {
    params: EtasParams,
    iterations: usize,
    converged: bool,
    note: Option<String>,
}

/// Minimizes the negative space-time log-likelihood over the free parameters.
fn refit(ctx: &LikelihoodContext, space: &ParamSpace, start: &EtasParams, opts: &FitOptions) -> Result<InnerFit> {
    let z0 = space.to_free(start)?;
    if z0.is_empty() {
        return Ok(InnerFit {
            params: *start,
            iterations: 0,
            converged: true,
            note: None,
        });
    }
    let objective = |z: &[f64]| ctx.nll(&space.from_free(z)).unwrap_or(f64::INFINITY);
    let result = match opts.optimizer {
        OptimizerKind::NelderMead => nelder_mead(objective, &z0, &opts.optim),
        OptimizerKind::Dfp => match opts.gradient {
            GradientMode::Analytic => {
                let gradient = |z: &[f64]| {
                    let p = space.from_free(z);
                    match ctx.nll_grad(&p) {
                        Ok(v) => space.chain_gradient(&p, &v.grad),
                        Err(_) => vec![f64::NAN; z.len()],
                    }
                };
                dfp_with_gradient(objective, gradient, &z0, &opts.optim)
            }
            GradientMode::FiniteDifference => {
                let step = opts.optim.fd_step;
                dfp_with_gradient(objective, |z: &[f64]| fd_gradient(&objective, z, step), &z0, &opts.optim)
            }
        },
    };
    match result {
        Ok(r) => Ok(InnerFit {
            params: space.from_free(&r.x_min),
            iterations: r.iterations,
            converged: r.converged,
            note: None,
        }),
        // a stalled line search still holds the best point found
        Err(OptimError::Stall {
            iteration,
            x,
            f,
            grad_norm,
            ..
        }) => Ok(InnerFit {
            params: space.from_free(&x),
            iterations: iteration,
            converged: grad_norm <= 1e-6 * f.abs().max(1.0),
            note: Some(format!("line search stalled at iteration {iteration} (|g| = {grad_norm:.3e})")),
        }),
        Err(e) => Err(e.into()),
    }
}

/// Pulls a supercritical iterate back to `target` branching ratio by
/// shrinking `alpha` below the magnitude decay rate and then `A`.
fn project_subcritical(
    params: &mut EtasParams,
    magnitude: &MagnitudeModel,
    space: &ParamSpace,
    target: f64,
) -> Option<String> {
    let before = branching_ratio(params, magnitude).ok();
    if before.is_some_and(|n| n < 1.0) {
        return None;
    }
    let rate = magnitude.tail_rate();
    if params.alpha >= rate && !space.is_fixed(ParamName::Alpha) {
        params.alpha = 0.9 * rate;
    }
    let n = branching_ratio(params, magnitude).ok()?;
    if n >= target && !space.is_fixed(ParamName::A) {
        params.a *= target / n;
    }
    Some(format!(
        "supercritical iterate (branching ratio {}) projected to {}",
        before.map_or("infinite".to_string(), |n| format!("{n:.4}")),
        branching_ratio(params, magnitude).map_or("infinite".to_string(), |n| format!("{n:.4}"))
    ))
}

/// Iterative stochastic declustering fit of the space-time model.
pub fn isdm_fit(cat: &Catalog, init: &EtasParams, opts: &FitOptions) -> Result<FitResult> {
    if opts.variant == Variant::GroundTemporal {
        return fit_ground(cat, init, opts);
    }
    if cat.n_target() < 10 {
        return Err(EtasError::InsufficientData(format!(
            "declustering needs at least 10 target events, found {}",
            cat.n_target()
        )));
    }
    let magnitude = fit_magnitude(cat, opts.magnitude)?;
    init.validate()?;
    let space = ParamSpace::new(*init, &opts.fixed)?;
    let mut params = *init;
    let mut bg = BackgroundField::uniform(cat.region(), opts.bandwidth.cell);
    let mut warnings = Vec::new();
    let mut trace = Vec::new();
    let mut prev_bg: Option<Vec<f64>> = None;
    let mut prev_l2: Option<f64> = None;
    let mut converged = false;
    let mut last_inner_ok = true;

    for iteration in 1..=opts.max_outer {
        let ctx = LikelihoodContext::new(cat, Some(&bg), Variant::SpatioTemporal, opts.spatial_mass)?;
        let probs = trigger_probs_in(&ctx, &params)?;
        let max_change = prev_bg.as_ref().map(|prev| {
            prev.iter()
                .zip(&probs.bg)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        });

        let new_bg = smooth_background(cat, &probs.bg, &opts.bandwidth)?;
        if !space.is_fixed(ParamName::Mu) {
            params.mu *= bg.region_integral() / new_bg.region_integral();
        }
        bg = new_bg;
        let ctx = LikelihoodContext::new(cat, Some(&bg), Variant::SpatioTemporal, opts.spatial_mass)?;
        let inner = refit(&ctx, &space, &params, opts)?;
        params = inner.params;
        if let Some(note) = inner.note {
            log::debug!("outer iteration {iteration}: {note}");
        }
        if let Some(w) = project_subcritical(&mut params, &magnitude, &space, opts.projection_ratio) {
            log::warn!("{w}");
            warnings.push(format!("iteration {iteration}: {w}"));
        }
        let l2 = -ctx.nll(&params)?;
        last_inner_ok = inner.converged;
        trace.push(OuterStep {
            iteration,
            l2,
            max_bg_change: max_change,
            optimizer_iterations: inner.iterations,
            optimizer_converged: inner.converged,
        });
        log::info!(
            "outer iteration {iteration}: l2 = {l2:.6}, max |d bg| = {}",
            max_change.map_or("-".into(), |c| format!("{c:.2e}"))
        );

        let bg_settled = max_change.is_some_and(|c| c < opts.bg_tol);
        let ll_settled = prev_l2.is_some_and(|p| (l2 - p).abs() < opts.ll_tol);
        prev_bg = Some(probs.bg);
        prev_l2 = Some(l2);
        if bg_settled || ll_settled {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!("declustering did not settle within {} iterations", opts.max_outer));
    }
    if !last_inner_ok {
        warnings.push("final parameter refit did not meet its tolerances".into());
    }
    let ctx = LikelihoodContext::new(cat, Some(&bg), Variant::SpatioTemporal, opts.spatial_mass)?;
    let probs = trigger_probs_in(&ctx, &params)?;
    finish(cat, params, magnitude, bg, probs, &ctx, &space, trace, converged && last_inner_ok, warnings, opts)
}

/// Fits the ground (space-integrated) intensity `mu + sum kappa g`.
///
/// `D`, `gamma` and `q` do not enter this likelihood and are held at their
/// initial values.
pub fn fit_ground(cat: &Catalog, init: &EtasParams, opts: &FitOptions) -> Result<FitResult> {
    if cat.n_target() == 0 {
        return Err(EtasError::InsufficientData("no target events".into()));
    }
    let magnitude = fit_magnitude(cat, opts.magnitude)?;
    init.validate()?;
    let mut fixed = opts.fixed.clone();
    for n in [ParamName::D, ParamName::Gamma, ParamName::Q] {
        if !fixed.contains(&n) {
            fixed.push(n);
        }
    }
    let space = ParamSpace::new(*init, &fixed)?;
    let ctx = LikelihoodContext::new(cat, None, Variant::GroundTemporal, SpatialMass::Infinite)?;
    let inner = refit(&ctx, &space, init, opts)?;
    let mut params = inner.params;
    let mut warnings = Vec::new();
    if let Some(w) = project_subcritical(&mut params, &magnitude, &space, opts.projection_ratio) {
        warnings.push(w);
    }
    if let Some(note) = inner.note {
        warnings.push(note);
    }
    let l2 = -ctx.nll(&params)?;
    let trace = vec![OuterStep {
        iteration: 1,
        l2,
        max_bg_change: None,
        optimizer_iterations: inner.iterations,
        optimizer_converged: inner.converged,
    }];
    let probs = trigger_probs_in(&ctx, &params)?;
    let bg = BackgroundField::uniform(cat.region(), opts.bandwidth.cell);
    finish(cat, params, magnitude, bg, probs, &ctx, &space, trace, inner.converged, warnings, opts)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    cat: &Catalog,
    params: EtasParams,
    magnitude: MagnitudeModel,
    background: BackgroundField,
    probs: TriggerProbs,
    ctx: &LikelihoodContext,
    space: &ParamSpace,
    trace: Vec<OuterStep>,
    converged: bool,
    mut warnings: Vec<String>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let l2 = -ctx.nll(&params)?;
    let loglik = LogLik::new(magnitude.loglik(cat), l2, cat.n_target());
    let n_params = space.dim() + magnitude.n_params();
    let aic = aic(&loglik, n_params.max(1))?;
    let branching = branching_ratio(&params, &magnitude).ok();
    if branching.map_or(true, |n| n >= 1.0) {
        warnings.push("fitted model is not subcritical".into());
    }

    let (stderr, stderr_note) = if opts.compute_stderr {
        match parameter_stderr(ctx, space, &params, &magnitude, cat) {
            Ok(se) => (Some(se), None),
            Err(reason) => (None, Some(reason)),
        }
    } else {
        (None, Some("not requested".into()))
    };

    Ok(FitResult {
        params,
        magnitude,
        loglik,
        aic,
        n_params,
        branching_ratio: branching,
        probs,
        background,
        iterations: trace.len(),
        converged,
        stderr,
        stderr_note,
        fixed: ParamName::ALL.into_iter().filter(|n| space.is_fixed(*n)).collect(),
        trace,
        warnings,
        options: opts.clone(),
    })
}

fn parameter_stderr(
    ctx: &LikelihoodContext,
    space: &ParamSpace,
    params: &EtasParams,
    magnitude: &MagnitudeModel,
    cat: &Catalog,
) -> std::result::Result<StdErrors, String> {
    let z = space.to_free(params).map_err(|e| e.to_string())?;
    let gradient = |z: &[f64]| {
        let p = space.from_free(z);
        match ctx.nll_grad(&p) {
            Ok(v) => space.chain_gradient(&p, &v.grad),
            Err(_) => vec![f64::NAN; z.len()],
        }
    };
    let hess = fd_hessian_from_gradient(&gradient, &z, 1e-5);
    let z_se = stderr_from_hessian_matrix(&hess)?;
    let jac = space.jacobian(params);
    let params_se = space
        .free()
        .iter()
        .zip(z_se.iter().zip(&jac))
        .map(|(&n, (s, j))| (n, s * j))
        .collect();
    let n = cat.n_target() as f64;
    let magnitude_se = match *magnitude {
        MagnitudeModel::Exponential { beta } => vec![("beta".to_string(), beta / n.sqrt())],
        MagnitudeModel::Gamma { shape, rate } => {
            // inverse Fisher information of the (shape, rate) pair
            let tri = trigamma(shape);
            let det = tri * shape / (rate * rate) - 1.0 / (rate * rate);
            if det > 0.0 {
                vec![
                    ("shape".to_string(), (shape / (rate * rate) / det / n).sqrt()),
                    ("rate".to_string(), (tri / det / n).sqrt()),
                ]
            } else {
                Vec::new()
            }
        }
    };
    Ok(StdErrors {
        params: params_se,
        magnitude: magnitude_se,
    })
}

fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 6.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + x2 / 2.0 + x2 / x * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

/// Square roots of the inverse-Hessian diagonal; fails unless the Hessian is
/// positive definite.
pub fn stderr_from_hessian_matrix(hess: &[Vec<f64>]) -> std::result::Result<Vec<f64>, String> {
    let n = hess.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if hess.iter().flatten().any(|v| !v.is_finite()) {
        return Err("Hessian has non-finite entries".into());
    }
    let m = DMatrix::from_fn(n, n, |i, j| hess[i][j]);
    let chol = Cholesky::new(m).ok_or_else(|| "observed information is not positive definite".to_string())?;
    let inv = chol.inverse();
    Ok((0..n).map(|k| inv[(k, k)].sqrt()).collect())
}

/// Standard errors of a minimum of `objective` from its finite-difference
/// Hessian, mapped to natural units by `jacobian` (`d natural / d x`).
pub fn stderr_from_hessian<F: Fn(&[f64]) -> f64>(
    objective: F,
    x_min: &[f64],
    jacobian: &[f64],
    step: f64,
) -> std::result::Result<Vec<f64>, String> {
    let hess = fd_hessian(&objective, x_min, step);
    let se = stderr_from_hessian_matrix(&hess)?;
    Ok(se.iter().zip(jacobian).map(|(s, j)| s * j.abs()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Background,
    Triggered,
    Uncertain,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Background => "background",
            Label::Triggered => "triggered",
            Label::Uncertain => "uncertain",
        }
    }
}

/// Background when `bg_j > threshold`, triggered when `p_j > threshold`,
/// otherwise uncertain. A threshold of exactly 1 also accepts probabilities
/// equal to 1.
pub fn classify(probs: &TriggerProbs, threshold: f64) -> Result<Vec<Label>> {
    if !(threshold > 0.5 && threshold <= 1.0) {
        return Err(EtasError::Param(format!("threshold {threshold} outside (0.5, 1]")));
    }
    let above = |v: f64| if threshold == 1.0 { v >= 1.0 } else { v > threshold };
    Ok(probs
        .bg
        .iter()
        .zip(&probs.p)
        .map(|(&bg, &p)| {
            if above(bg) {
                Label::Background
            } else if above(p) {
                Label::Triggered
            } else {
                Label::Uncertain
            }
        })
        .collect())
}

/// One random declustering: each event is drawn as background or assigned a
/// parent according to its row of probabilities. `None` marks background.
pub fn sample_realization(probs: &TriggerProbs, seed: u64) -> Vec<Option<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    probs
        .rows
        .iter()
        .zip(&probs.bg)
        .map(|(row, &bg)| {
            let total = bg + row.iter().map(|(_, p)| p).sum::<f64>();
            let mut v = rng.random::<f64>() * total;
            if v < bg {
                return None;
            }
            v -= bg;
            for &(i, p) in row {
                if v < p {
                    return Some(i);
                }
                v -= p;
            }
            row.last().map(|&(i, _)| i)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Event, Region};
    use approx::assert_relative_eq;

    fn region() -> Region {
        Region::new(0.0, 3.0, 0.0, 3.0).unwrap()
    }

    fn params() -> EtasParams {
        EtasParams {
            mu: 0.2,
            a: 0.4,
            alpha: 1.0,
            c: 0.01,
            p: 1.2,
            d: 0.01,
            gamma: 0.5,
            q: 1.8,
        }
    }

    fn catalog(n: usize) -> Catalog {
        let evs = (0..n)
            .map(|k| {
                let f = k as f64;
                Event::new(f * 1.7 + (f * 0.3).sin(), 0.2 + (f * 0.77) % 2.6, 0.2 + (f * 0.41) % 2.6, 10.0, 5.0 + (f * 0.37) % 2.0)
            })
            .collect();
        Catalog::new(evs, region(), 0.0, n as f64 * 1.7 + 2.0, 5.0).unwrap()
    }

    #[test]
    fn first_event_is_background_and_rows_sum_to_one() {
        let cat = catalog(60);
        let bg = BackgroundField::uniform(region(), 0.1);
        let probs = trigger_probs(&cat, &params(), &bg).unwrap();
        assert_eq!(probs.bg[0], 1.0);
        assert!(probs.rows[0].is_empty());
        for j in 0..probs.len() {
            assert!((probs.row_total(j) - 1.0).abs() < 1e-10);
            assert!((probs.bg[j] + probs.p[j] - 1.0).abs() < 1e-12);
            for &(i, p) in &probs.rows[j] {
                assert!(i < j && (0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn zero_productivity_means_all_background() {
        let cat = catalog(30);
        let bg = BackgroundField::uniform(region(), 0.1);
        let mut p = params();
        p.a = 0.0;
        let probs = trigger_probs(&cat, &p, &bg).unwrap();
        assert!(probs.bg.iter().all(|&b| b == 1.0));
    }

    #[test]
    fn tied_times_never_trigger_each_other() {
        let evs = vec![Event::new(1.0, 1.0, 1.0, 5.0, 6.0), Event::new(1.0, 1.01, 1.0, 5.0, 5.0)];
        let cat = Catalog::new(evs, region(), 0.0, 5.0, 5.0).unwrap();
        let probs = trigger_probs(&cat, &params(), &BackgroundField::uniform(region(), 0.1)).unwrap();
        assert!(probs.rows[1].is_empty());
        assert_eq!(probs.bg[1], 1.0);
    }

    #[test]
    fn classification_rules() {
        let probs = TriggerProbs {
            rows: vec![vec![], vec![(0, 0.5)], vec![(0, 0.97)], vec![]],
            p: vec![0.04, 0.5, 0.97, 0.0],
            bg: vec![0.96, 0.5, 0.03, 1.0],
            truncated: vec![0.0; 4],
        };
        let l = classify(&probs, 0.95).unwrap();
        assert_eq!(l, vec![Label::Background, Label::Uncertain, Label::Triggered, Label::Background]);
        let strict = classify(&probs, 1.0).unwrap();
        assert_eq!(strict, vec![Label::Uncertain, Label::Uncertain, Label::Uncertain, Label::Background]);
        assert!(classify(&probs, 0.5).is_err());
    }

    #[test]
    fn realization_is_seeded() {
        let cat = catalog(40);
        let probs = trigger_probs(&cat, &params(), &BackgroundField::uniform(region(), 0.1)).unwrap();
        let a = sample_realization(&probs, 7);
        assert_eq!(a, sample_realization(&probs, 7));
        assert_eq!(a[0], None);
        for (j, parent) in a.iter().enumerate() {
            if let Some(i) = parent {
                assert!(*i < j);
            }
        }
    }

    #[test]
    fn quadratic_stderr() {
        let sigma = 0.7;
        let se = stderr_from_hessian(|x: &[f64]| 0.5 * (x[0] / sigma).powi(2), &[0.0], &[1.0], 1e-4).unwrap();
        assert_relative_eq!(se[0], sigma, max_relative = 1e-6);
        assert!(stderr_from_hessian(|x: &[f64]| -x[0] * x[0], &[0.0], &[1.0], 1e-4).is_err());
    }

    #[test]
    fn poisson_rate_stderr() {
        // negative log-likelihood of n events in time T as a function of ln(mu)
        let (n, t) = (400.0, 100.0);
        let nll = |z: &[f64]| z[0].exp() * t - n * z[0];
        let mu_hat: f64 = n / t;
        let se = stderr_from_hessian(nll, &[mu_hat.ln()], &[mu_hat], 1e-4).unwrap();
        assert_relative_eq!(se[0], mu_hat / n.sqrt(), max_relative = 1e-5);
    }

    #[test]
    fn fixed_productivity_converges_immediately() {
        let cat = catalog(40);
        let mut init = EtasParams::initial(cat.n_target(), cat.duration());
        init.a = 0.0;
        let opts = FitOptions {
            fixed: vec![ParamName::A],
            ..Default::default()
        };
        let fit = isdm_fit(&cat, &init, &opts).unwrap();
        assert!(fit.converged);
        assert!(fit.iterations <= 2);
        assert!(fit.probs.bg.iter().all(|&b| b == 1.0));
        // the Poisson fit puts the expected count at N'
        assert_relative_eq!(fit.background_count(&cat), cat.n_target() as f64, max_relative = 1e-6);
        // the kernel parameters are unidentified once A = 0
        assert!(fit.stderr.is_none() && fit.stderr_note.is_some());
    }

    #[test]
    fn too_few_events_rejected() {
        let cat = catalog(5);
        assert!(matches!(
            isdm_fit(&cat, &params(), &FitOptions::default()),
            Err(EtasError::InsufficientData(_))
        ));
    }
}
