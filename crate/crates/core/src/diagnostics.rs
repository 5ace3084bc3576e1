//! Residual analysis: time-rescaled event times, uniformity tests and
//! temporal / spatial residuals.
//!
//! Under a correctly specified model the compensator increments between
//! consecutive events are i.i.d. unit exponentials, so
//! `U_i = 1 - exp(-(tau_i - tau_{i-1}))` should look uniform.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{EtasError, Result};
use crate::intensity::{knn_bandwidths, BackgroundField, BandwidthConfig, Grid, GridQuantity, IntensityGrid};
use crate::model::EtasParams;

/// Background rate per day over the region: `mu * int_S u`, or `mu` alone
/// without a background field.
fn background_rate(params: &EtasParams, bg: Option<&BackgroundField>) -> f64 {
    params.mu * bg.map_or(1.0, |b| b.region_integral())
}

/// Ground compensator from `t_start` to each target event time.
pub fn transformed_times(cat: &Catalog, params: &EtasParams, bg: Option<&BackgroundField>) -> Result<Vec<f64>> {
    params.validate()?;
    let rate = background_rate(params, bg);
    let ev = cat.events();
    let m0 = cat.m0();
    let t0 = cat.t_start();
    let targets: Vec<usize> = (0..ev.len()).filter(|&i| ev[i].is_target).collect();
    Ok(targets
        .par_iter()
        .map(|&j| {
            let tj = ev[j].t;
            let triggered: f64 = ev[..j]
                .iter()
                .take_while(|e| e.t < tj)
                .map(|e| params.productivity(e.mag - m0) * (params.g_cdf(tj - e.t) - params.g_cdf((t0 - e.t).max(0.0))))
                .sum();
            rate * (tj - t0) + triggered
        })
        .collect())
}

/// `U_i = 1 - exp(-(tau_i - tau_{i-1}))` with `tau_0 = 0`.
pub fn uniform_residuals(tau: &[f64]) -> Result<Vec<f64>> {
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(tau.len());
    for (i, &t) in tau.iter().enumerate() {
        let gap = t - prev;
        if !(gap >= 0.0) {
            return Err(EtasError::Domain(format!(
                "transformed times decrease at index {i} ({prev} then {t})"
            )));
        }
        out.push(-(-gap).exp_m1());
        prev = t;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub n: usize,
    pub statistic: f64,
    /// Asymptotic p-value; omitted below ten observations.
    pub p_value: Option<f64>,
}

/// Two-sided one-sample Kolmogorov-Smirnov test against U(0, 1).
pub fn ks_uniform_test(u: &[f64]) -> Result<KsTest> {
    if u.is_empty() {
        return Err(EtasError::InsufficientData("KS test on an empty sample".into()));
    }
    let mut sorted = u.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let v = v.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - v).max(v - i as f64 / n)
        })
        .fold(0.0, f64::max);
    let p_value = (sorted.len() >= 10).then(|| kolmogorov_sf(n.sqrt() * statistic));
    Ok(KsTest {
        n: sorted.len(),
        statistic,
        p_value,
    })
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // Jacobi-theta form of the CDF converges fast for small x
        let k = -PI * PI / (8.0 * x * x);
        let cdf: f64 = (1..=20)
            .map(|j| {
                let m = (2 * j - 1) as f64;
                (k * m * m).exp()
            })
            .sum::<f64>()
            * (2.0 * PI).sqrt()
            / x;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let sf: f64 = (1..=20)
            .map(|j| {
                let j = j as f64;
                let sign = if j as usize % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * j * j * x * x).exp()
            })
            .sum::<f64>()
            * 2.0;
        sf.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualBin {
    pub start: f64,
    pub end: f64,
    pub observed: usize,
    pub expected: f64,
    pub residual: f64,
}

/// `n` equal-width bin edges over the target window.
pub fn equal_bins(cat: &Catalog, n: usize) -> Vec<f64> {
    let n = n.max(1);
    let (a, b) = (cat.t_start(), cat.t_end());
    (0..=n)
        .map(|k| if k == n { b } else { a + (b - a) * k as f64 / n as f64 })
        .collect()
}

/// Ground compensator over `[t_start, t]`, counting parents before `t`.
fn cumulative_compensator(cat: &Catalog, params: &EtasParams, rate: f64, t: f64) -> f64 {
    let t0 = cat.t_start();
    let m0 = cat.m0();
    rate * (t - t0)
        + cat
            .events()
            .iter()
            .take_while(|e| e.t < t)
            .map(|e| params.productivity(e.mag - m0) * (params.g_cdf(t - e.t) - params.g_cdf((t0 - e.t).max(0.0))))
            .sum::<f64>()
}

/// Observed target count minus expected count per bin. `edges` must run
/// from `t_start` to `t_start + T`; the last bin is closed on the right.
pub fn temporal_residuals(
    cat: &Catalog,
    params: &EtasParams,
    bg: Option<&BackgroundField>,
    edges: &[f64],
) -> Result<Vec<ResidualBin>> {
    params.validate()?;
    if edges.len() < 2 || edges[0] != cat.t_start() || *edges.last().unwrap() != cat.t_end() {
        return Err(EtasError::Param("bin edges must span the target window".into()));
    }
    if edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(EtasError::Param("bin edges must increase".into()));
    }
    let rate = background_rate(params, bg);
    let cum: Vec<f64> = edges
        .par_iter()
        .map(|&t| cumulative_compensator(cat, params, rate, t))
        .collect();
    let last = edges.len() - 2;
    Ok((0..=last)
        .map(|k| {
            let (a, b) = (edges[k], edges[k + 1]);
            let observed = cat
                .targets()
                .filter(|e| e.t >= a && (e.t < b || (k == last && e.t <= b)))
                .count();
            let expected = cum[k + 1] - cum[k];
            ResidualBin {
                start: a,
                end: b,
                observed,
                expected,
                residual: observed as f64 - expected,
            }
        })
        .collect())
}

/// Kernel-smoothed target events minus the model intensity integrated over
/// the target window, per grid node (events per squared degree).
pub fn spatial_residuals(
    cat: &Catalog,
    params: &EtasParams,
    bg: &BackgroundField,
    cfg: &BandwidthConfig,
) -> Result<IntensityGrid> {
    params.validate()?;
    let grid = Grid::over(&cat.region(), cfg.cell);
    let h = knn_bandwidths(cat, cfg);
    let ev = cat.events();
    let observed: Vec<(f64, f64, f64)> = ev
        .iter()
        .zip(&h)
        .filter(|(e, _)| e.is_target)
        .map(|(e, &h)| (e.lon, e.lat, h))
        .collect();
    let (t0, t1, m0) = (cat.t_start(), cat.t_end(), cat.m0());
    let parents: Vec<(f64, f64, f64, f64)> = ev
        .iter()
        .filter(|e| e.t < t1)
        .map(|e| {
            let dm = e.mag - m0;
            let weight = params.productivity(dm) * (params.g_cdf(t1 - e.t) - params.g_cdf((t0 - e.t).max(0.0)));
            (e.lon, e.lat, weight, params.sigma(dm))
        })
        .collect();
    let duration = cat.duration();
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (x, y) = grid.node(k);
            let obs: f64 = observed
                .iter()
                .map(|&(ex, ey, h)| {
                    let r2 = (x - ex).powi(2) + (y - ey).powi(2);
                    (-r2 / (2.0 * h * h)).exp() / (2.0 * PI * h * h)
                })
                .sum();
            let model: f64 = params.mu * bg.value_at(x, y) * duration
                + parents
                    .iter()
                    .map(|&(px, py, w, s)| w * params.f((x - px).powi(2) + (y - py).powi(2), s))
                    .sum::<f64>();
            obs - model
        })
        .collect();
    Ok(IntensityGrid {
        grid,
        values,
        quantity: GridQuantity::SpatialResidual,
        clamped: 0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub tau: Vec<f64>,
    pub u_seq: Vec<f64>,
    pub ks: KsTest,
    pub temporal: Vec<ResidualBin>,
    pub spatial: Option<IntensityGrid>,
    pub compensator: f64,
    pub n_target: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsSummary {
    pub n_target: usize,
    pub compensator: f64,
    pub ks_statistic: f64,
    pub ks_p_value: Option<f64>,
    pub n_bins: usize,
    pub max_abs_temporal_residual: f64,
}

impl Diagnostics {
    pub fn summary(&self) -> DiagnosticsSummary {
        DiagnosticsSummary {
            n_target: self.n_target,
            compensator: self.compensator,
            ks_statistic: self.ks.statistic,
            ks_p_value: self.ks.p_value,
            n_bins: self.temporal.len(),
            max_abs_temporal_residual: self.temporal.iter().map(|b| b.residual.abs()).fold(0.0, f64::max),
        }
    }

    pub fn write_tau_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# etas-tau v1")?;
        writeln!(out, "index,tau")?;
        for (i, t) in self.tau.iter().enumerate() {
            writeln!(out, "{},{t}", i + 1)?;
        }
        Ok(())
    }

    /// Sorted U_i beside the uniform quantiles `(i - 0.5)/n` for Q-Q plots.
    pub fn write_u_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# etas-uniform-residuals v1")?;
        writeln!(out, "index,u,u_sorted,uniform_quantile")?;
        let mut sorted = self.u_seq.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        for (i, (u, s)) in self.u_seq.iter().zip(&sorted).enumerate() {
            writeln!(out, "{},{u},{s},{}", i + 1, (i as f64 + 0.5) / n)?;
        }
        Ok(())
    }

    pub fn write_temporal_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# etas-temporal-residuals v1")?;
        writeln!(out, "start,end,observed,expected,residual")?;
        for b in &self.temporal {
            writeln!(out, "{},{},{},{},{}", b.start, b.end, b.observed, b.expected, b.residual)?;
        }
        Ok(())
    }
}

/// Every residual of a fitted model. Spatial residuals need a background
/// field and are skipped without one.
pub fn diagnose(
    cat: &Catalog,
    params: &EtasParams,
    bg: Option<&BackgroundField>,
    n_bins: usize,
    cfg: &BandwidthConfig,
) -> Result<Diagnostics> {
    let tau = transformed_times(cat, params, bg)?;
    let u_seq = uniform_residuals(&tau)?;
    let ks = ks_uniform_test(&u_seq)?;
    let temporal = temporal_residuals(cat, params, bg, &equal_bins(cat, n_bins))?;
    let spatial = match bg {
        Some(bg) => Some(spatial_residuals(cat, params, bg, cfg)?),
        None => None,
    };
    let compensator = cumulative_compensator(cat, params, background_rate(params, bg), cat.t_end());
    Ok(Diagnostics {
        tau,
        u_seq,
        ks,
        temporal,
        spatial,
        compensator,
        n_target: cat.n_target(),
    })
}
