//! ETAS log-likelihood, its magnitude / space-time split and the compensator.
//!
//! `l = l1 + l2` with `l1 = sum_targets ln v(m_i)` the magnitude part and
//! `l2 = sum_targets ln lambda(t_i, x_i, y_i) - compensator` the space-time
//! part. Burn-in events (before `t_start`) act as parents only.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Region};
use crate::error::{EtasError, Result};
use crate::intensity::BackgroundField;
use crate::model::{EtasParams, MagnitudeModel};
use crate::quad::adaptive_simpson;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Full `lambda(t, x, y)` with the spatial kernel and background field.
    #[default]
    SpatioTemporal,
    /// Space-integrated intensity `mu + sum kappa g`.
    GroundTemporal,
}

/// How much of each triggered cluster's spatial mass the compensator counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialMass {
    /// Every cluster's mass counted as 1 (kernel integrated over the plane).
    #[default]
    Infinite,
    /// Kernel integrated over the study rectangle.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLik {
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
    pub n_target: usize,
}

impl LogLik {
    pub fn new(l1: f64, l2: f64, n_target: usize) -> Self {
        LogLik {
            l1,
            l2,
            total: l1 + l2,
            n_target,
        }
    }
}

/// `2k - 2 l`.
pub fn aic(loglik: &LogLik, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(EtasError::Param("AIC needs at least one parameter".into()));
    }
    Ok(2.0 * k as f64 - 2.0 * loglik.total)
}

/// Catalog data laid out for repeated likelihood evaluation.
#[derive(Debug, Clone)]
pub struct LikelihoodContext {
    variant: Variant,
    mass: SpatialMass,
    region: Region,
    t: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    dm: Vec<f64>,
    targets: Vec<usize>,
    /// Background density at each event.
    u: Vec<f64>,
    u_integral: f64,
    t_start: f64,
    t_end: f64,
}

/// Space-time part of the negative log-likelihood and its gradient with
/// respect to `(mu, A, alpha, c, p, D, gamma, q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NllValue {
    pub value: f64,
    pub grad: [f64; 8],
}

impl LikelihoodContext {
    /// `bg` is required for the space-time variant and ignored otherwise.
    pub fn new(cat: &Catalog, bg: Option<&BackgroundField>, variant: Variant, mass: SpatialMass) -> Result<Self> {
        let ev = cat.events();
        let (u, u_integral) = match (variant, bg) {
            (Variant::SpatioTemporal, Some(bg)) => (ev.iter().map(|e| bg.value_at(e.lon, e.lat)).collect(), bg.region_integral()),
            (Variant::SpatioTemporal, None) => {
                return Err(EtasError::Param("space-time likelihood needs a background field".into()))
            }
            (Variant::GroundTemporal, _) => (vec![1.0; ev.len()], 1.0),
        };
        Ok(LikelihoodContext {
            variant,
            mass,
            region: cat.region(),
            t: ev.iter().map(|e| e.t).collect(),
            x: ev.iter().map(|e| e.lon).collect(),
            y: ev.iter().map(|e| e.lat).collect(),
            dm: ev.iter().map(|e| e.mag - cat.m0()).collect(),
            targets: (0..ev.len()).filter(|&i| ev[i].is_target).collect(),
            u,
            u_integral,
            t_start: cat.t_start(),
            t_end: cat.t_end(),
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n_target(&self) -> usize {
        self.targets.len()
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Background term of the compensator per unit `mu`.
    pub fn background_exposure(&self) -> f64 {
        (self.t_end - self.t_start) * self.u_integral
    }

    /// Background density at event `j` (1 for the ground variant).
    pub fn background_at(&self, j: usize) -> f64 {
        self.u[j]
    }

    /// Calls `visit(i, kappa_i g f)` for each parent of event `j` and returns
    /// the intensity at `j`.
    pub fn intensity_at<F: FnMut(usize, f64)>(&self, params: &EtasParams, j: usize, mut visit: F) -> f64 {
        let (tj, xj, yj) = (self.t[j], self.x[j], self.y[j]);
        let gnorm = (params.p - 1.0) / params.c;
        let mut lam = params.mu * self.u[j];
        for i in 0..j {
            let dt = tj - self.t[i];
            if dt <= 0.0 {
                break;
            }
            let mut term = params.productivity(self.dm[i]) * gnorm * (-params.p * (dt / params.c).ln_1p()).exp();
            if self.variant == Variant::SpatioTemporal {
                let r2 = (xj - self.x[i]).powi(2) + (yj - self.y[i]).powi(2);
                term *= params.f(r2, params.sigma(self.dm[i]));
            }
            visit(i, term);
            lam += term;
        }
        lam
    }

    /// Negative space-time log-likelihood `-(l2)` only.
    pub fn nll(&self, params: &EtasParams) -> Result<f64> {
        Ok(self.eval(params, false)?.value)
    }

    /// Negative space-time log-likelihood with its analytic gradient.
    pub fn nll_grad(&self, params: &EtasParams) -> Result<NllValue> {
        self.eval(params, true)
    }

    /// Compensator: expected number of target-window events.
    pub fn compensator(&self, params: &EtasParams) -> f64 {
        self.compensator_parts(params, false).0
    }

    fn eval(&self, params: &EtasParams, with_grad: bool) -> Result<NllValue> {
        params.validate()?;
        let spatial = self.variant == Variant::SpatioTemporal;
        let n = self.t.len();
        let unit: Vec<f64> = self.dm.iter().map(|&dm| (params.alpha * dm).exp()).collect();
        let sigma: Vec<f64> = self.dm.iter().map(|&dm| params.sigma(dm)).collect();
        let fnorm: Vec<f64> = sigma.iter().map(|s| (params.q - 1.0) / (PI * s)).collect();
        let (c, p, q) = (params.c, params.p, params.q);
        let gnorm = (p - 1.0) / c;
        let dp_const = 1.0 / (p - 1.0);
        let dq_const = 1.0 / (q - 1.0);

        let rows: Vec<(f64, [f64; 8])> = self
            .targets
            .par_iter()
            .map(|&j| {
                let (tj, xj, yj) = (self.t[j], self.x[j], self.y[j]);
                // accumulators: sum U, U dm, U dlng/dc, U dlng/dp, U dlnf/dsigma sigma,
                // U dlnf/dsigma sigma dm, U dlnf/dq
                let mut acc = [0.0f64; 7];
                for i in 0..j.min(n) {
                    let dt = tj - self.t[i];
                    if dt <= 0.0 {
                        break;
                    }
                    let lg = (dt / c).ln_1p();
                    let (u, lf, r2) = if spatial {
                        let r2 = (xj - self.x[i]).powi(2) + (yj - self.y[i]).powi(2);
                        let lf = (r2 / sigma[i]).ln_1p();
                        (unit[i] * gnorm * fnorm[i] * (-p * lg - q * lf).exp(), lf, r2)
                    } else {
                        (unit[i] * gnorm * (-p * lg).exp(), 0.0, 0.0)
                    };
                    acc[0] += u;
                    if with_grad {
                        acc[1] += u * self.dm[i];
                        acc[2] += u * (-1.0 / c + p * dt / (c * (c + dt)));
                        acc[3] += u * (dp_const - lg);
                        if spatial {
                            let s = sigma[i];
                            let dsig = -1.0 + q * r2 / (s + r2);
                            acc[4] += u * dsig;
                            acc[5] += u * dsig * self.dm[i];
                            acc[6] += u * (dq_const - lf);
                        }
                    }
                }
                let lam = params.mu * self.u[j] + params.a * acc[0];
                let mut g = [0.0; 8];
                if with_grad && lam > 0.0 {
                    let a = params.a;
                    let dl = [
                        self.u[j],
                        acc[0],
                        a * acc[1],
                        a * acc[2],
                        a * acc[3],
                        a * acc[4] / params.d,
                        a * acc[5],
                        a * acc[6],
                    ];
                    for k in 0..8 {
                        g[k] = -dl[k] / lam;
                    }
                }
                (lam, g)
            })
            .collect();

        let mut value = 0.0;
        let mut grad = [0.0; 8];
        for (k, (lam, g)) in rows.iter().enumerate() {
            if !(*lam > 0.0) || !lam.is_finite() {
                return Err(EtasError::ZeroIntensity {
                    event: self.targets[k],
                    value: *lam,
                });
            }
            value -= lam.ln();
            for d in 0..8 {
                grad[d] += g[d];
            }
        }
        let (comp, cgrad) = self.compensator_parts(params, with_grad);
        value += comp;
        for d in 0..8 {
            grad[d] += cgrad[d];
        }
        Ok(NllValue { value, grad })
    }

    fn compensator_parts(&self, params: &EtasParams, with_grad: bool) -> (f64, [f64; 8]) {
        let exposure = self.background_exposure();
        let mut total = params.mu * exposure;
        let mut grad = [0.0; 8];
        grad[0] = exposure;
        let (c, p) = (params.c, params.p);
        let exact = self.variant == Variant::SpatioTemporal && self.mass == SpatialMass::Exact;
        let per_event: Vec<[f64; 8]> = (0..self.t.len())
            .into_par_iter()
            .map(|i| {
                let mut out = [0.0; 8];
                let ti = self.t[i];
                if ti >= self.t_end {
                    return out;
                }
                let s1 = self.t_end - ti;
                let s0 = (self.t_start - ti).max(0.0);
                let dg = params.g_cdf(s1) - params.g_cdf(s0);
                let unit = (params.alpha * self.dm[i]).exp();
                let (mass, dmass_dsigma, dmass_dq) = if exact {
                    rect_mass(self.x[i], self.y[i], params.sigma(self.dm[i]), params.q, &self.region, with_grad)
                } else {
                    (1.0, 0.0, 0.0)
                };
                let kappa = params.a * unit;
                out[0] = kappa * dg * mass;
                if with_grad {
                    let dgc = |s: f64| {
                        if s == 0.0 {
                            (0.0, 0.0)
                        } else {
                            let w = (s / c).ln_1p();
                            (
                                (1.0 - p) * (-p * w).exp() * s / (c * c),
                                w * ((1.0 - p) * w).exp(),
                            )
                        }
                    };
                    let (c1, p1) = dgc(s1);
                    let (c0, p0) = dgc(s0);
                    out[1] = unit * dg * mass;
                    out[2] = kappa * self.dm[i] * dg * mass;
                    out[3] = kappa * (c1 - c0) * mass;
                    out[4] = kappa * (p1 - p0) * mass;
                    if exact {
                        let sigma = params.sigma(self.dm[i]);
                        out[5] = kappa * dg * dmass_dsigma * sigma / params.d;
                        out[6] = kappa * dg * dmass_dsigma * sigma * self.dm[i];
                        out[7] = kappa * dg * dmass_dq;
                    }
                }
                out
            })
            .collect();
        for row in &per_event {
            total += row[0];
            for d in 1..8 {
                grad[d] += row[d];
            }
        }
        (total, grad)
    }
}

/// Mass of the spatial kernel centred at `(x, y)` inside `region`, with its
/// derivatives in `sigma` and `q` when requested.
fn rect_mass(x: f64, y: f64, sigma: f64, q: f64, region: &Region, with_grad: bool) -> (f64, f64, f64) {
    // distance to the boundary along direction theta
    let reach = |theta: f64| {
        let (ct, st) = (theta.cos(), theta.sin());
        let rx = if ct > 1e-15 {
            (region.lon_max - x) / ct
        } else if ct < -1e-15 {
            (region.lon_min - x) / ct
        } else {
            f64::INFINITY
        };
        let ry = if st > 1e-15 {
            (region.lat_max - y) / st
        } else if st < -1e-15 {
            (region.lat_min - y) / st
        } else {
            f64::INFINITY
        };
        rx.min(ry).max(0.0)
    };
    // split at the corner directions so each piece is smooth
    let mut cuts: Vec<f64> = [
        (region.lat_max - y).atan2(region.lon_max - x),
        (region.lat_max - y).atan2(region.lon_min - x),
        (region.lat_min - y).atan2(region.lon_min - x),
        (region.lat_min - y).atan2(region.lon_max - x),
    ]
    .iter()
    .map(|a| a.rem_euclid(2.0 * PI))
    .collect();
    cuts.sort_by(f64::total_cmp);
    let mut edges = vec![0.0];
    edges.extend(cuts);
    edges.push(2.0 * PI);
    let integrate = |h: &dyn Fn(f64) -> f64| {
        edges
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| adaptive_simpson(&|th| h(reach(th)), w[0], w[1], 1e-11, 30))
            .sum::<f64>()
            / (2.0 * PI)
    };
    let mass = integrate(&|r| -((1.0 - q) * (r * r / sigma).ln_1p()).exp_m1());
    if !with_grad {
        return (mass, 0.0, 0.0);
    }
    let dsigma = integrate(&|r| {
        let w = (r * r / sigma).ln_1p();
        (1.0 - q) * (-q * w).exp() * r * r / (sigma * sigma)
    });
    let dq = integrate(&|r| {
        let w = (r * r / sigma).ln_1p();
        w * ((1.0 - q) * w).exp()
    });
    (mass, dsigma, dq)
}

/// Full log-likelihood of `cat`; `bg` is required for the space-time variant.
pub fn loglik(
    cat: &Catalog,
    params: &EtasParams,
    magnitude: &MagnitudeModel,
    bg: Option<&BackgroundField>,
    variant: Variant,
) -> Result<LogLik> {
    loglik_with(cat, params, magnitude, bg, variant, SpatialMass::Infinite)
}

pub fn loglik_with(
    cat: &Catalog,
    params: &EtasParams,
    magnitude: &MagnitudeModel,
    bg: Option<&BackgroundField>,
    variant: Variant,
    mass: SpatialMass,
) -> Result<LogLik> {
    magnitude.validate()?;
    let ctx = LikelihoodContext::new(cat, bg, variant, mass)?;
    let l2 = -ctx.nll(params)?;
    Ok(LogLik::new(magnitude.loglik(cat), l2, cat.n_target()))
}

/// Expected number of target-window events under the model.
pub fn compensator(
    cat: &Catalog,
    params: &EtasParams,
    bg: Option<&BackgroundField>,
    variant: Variant,
    mass: SpatialMass,
) -> Result<f64> {
    params.validate()?;
    Ok(LikelihoodContext::new(cat, bg, variant, mass)?.compensator(params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Event;
    use crate::intensity::{conditional_intensity, ground_intensity};
    use approx::assert_relative_eq;

    fn params() -> EtasParams {
        EtasParams {
            mu: 0.05,
            a: 0.3,
            alpha: 1.1,
            c: 0.02,
            p: 1.3,
            d: 0.02,
            gamma: 0.8,
            q: 1.7,
        }
    }

    fn region() -> Region {
        Region::new(0.0, 2.0, 0.0, 1.5).unwrap()
    }

    fn sample_catalog() -> Catalog {
        let mut evs = Vec::new();
        for k in 0..40 {
            let f = k as f64;
            let mut e = Event::new(
                f * 2.3 + (f * 0.7).sin().abs(),
                0.1 + (f * 0.613) % 1.8,
                0.1 + (f * 0.377) % 1.3,
                10.0,
                5.0 + (f * 0.29) % 1.7,
            );
            if k % 7 == 3 {
                e.t = evs.last().map_or(0.0, |p: &Event| p.t + 0.01);
            }
            evs.push(e);
        }
        Catalog::new(evs, region(), 10.0, 90.0, 5.0).unwrap()
    }

    #[test]
    fn poisson_special_case() {
        let cat = Catalog::new(vec![Event::new(3.0, 1.0, 1.0, 5.0, 5.4)], region(), 0.0, 10.0, 5.0).unwrap();
        let bg = BackgroundField::uniform(region(), 0.1);
        let mut p = params();
        p.a = 0.0;
        let mag = MagnitudeModel::Exponential { beta: 2.0 };
        let ll = loglik(&cat, &p, &mag, Some(&bg), Variant::SpatioTemporal).unwrap();
        let u = 1.0 / 3.0;
        let expect = (p.mu * u * 2.0 * (-2.0f64 * 0.4).exp()).ln() - p.mu * 10.0 * 1.0;
        assert_relative_eq!(ll.total, expect, max_relative = 1e-12);
        assert_eq!(ll.total, ll.l1 + ll.l2);
    }

    #[test]
    fn event_terms_match_conditional_intensity() {
        let cat = sample_catalog();
        let bg = BackgroundField::uniform(region(), 0.1);
        let p = params();
        let ctx = LikelihoodContext::new(&cat, Some(&bg), Variant::SpatioTemporal, SpatialMass::Infinite).unwrap();
        let mut direct = 0.0;
        for e in cat.targets() {
            direct += conditional_intensity(&cat, &p, &bg, e.t, e.lon, e.lat).ln();
        }
        assert_relative_eq!(-ctx.nll(&p).unwrap(), direct - ctx.compensator(&p), max_relative = 1e-12);
    }

    #[test]
    fn ground_compensator_matches_quadrature() {
        let cat = sample_catalog();
        let p = params();
        let comp = compensator(&cat, &p, None, Variant::GroundTemporal, SpatialMass::Infinite).unwrap();
        // integrate between event times so the integrand is smooth
        let mut knots: Vec<f64> = cat.events().iter().map(|e| e.t).filter(|&t| t > cat.t_start()).collect();
        knots.insert(0, cat.t_start());
        knots.push(cat.t_end());
        let mut quad = 0.0;
        for w in knots.windows(2) {
            if w[1] > w[0] {
                // ground_intensity counts strictly earlier events; nudge inside
                let f = |t: f64| ground_intensity(&cat, &p, t);
                quad += adaptive_simpson(&f, w[0] + 1e-13, w[1], 1e-12, 50);
            }
        }
        assert_relative_eq!(comp, quad, max_relative = 1e-6);
    }

    #[test]
    fn event_at_window_end_adds_nothing() {
        let p = params();
        let base = vec![Event::new(1.0, 1.0, 1.0, 5.0, 5.5)];
        let mut with_end = base.clone();
        with_end.push(Event::new(10.0 - 1e-13, 1.0, 1.0, 5.0, 6.0));
        let a = Catalog::new(base, region(), 0.0, 10.0, 5.0).unwrap();
        let b = Catalog::new(with_end, region(), 0.0, 10.0, 5.0).unwrap();
        let ca = compensator(&a, &p, None, Variant::GroundTemporal, SpatialMass::Infinite).unwrap();
        let cb = compensator(&b, &p, None, Variant::GroundTemporal, SpatialMass::Infinite).unwrap();
        assert!((ca - cb).abs() < 1e-9, "{ca} vs {cb}");
    }

    #[test]
    fn zero_productivity_compensator_is_background() {
        let cat = sample_catalog();
        let bg = BackgroundField::uniform(region(), 0.1);
        let mut p = params();
        p.a = 0.0;
        let comp = compensator(&cat, &p, Some(&bg), Variant::SpatioTemporal, SpatialMass::Exact).unwrap();
        assert_relative_eq!(comp, p.mu * 90.0, max_relative = 1e-12);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let cat = sample_catalog();
        let bg = BackgroundField::uniform(region(), 0.1);
        let p = params();
        for (variant, mass) in [
            (Variant::SpatioTemporal, SpatialMass::Infinite),
            (Variant::SpatioTemporal, SpatialMass::Exact),
            (Variant::GroundTemporal, SpatialMass::Infinite),
        ] {
            let ctx = LikelihoodContext::new(&cat, Some(&bg), variant, mass).unwrap();
            let got = ctx.nll_grad(&p).unwrap();
            assert_relative_eq!(got.value, ctx.nll(&p).unwrap(), max_relative = 1e-14);
            let x = p.to_array();
            for k in 0..8 {
                let h = 1e-6 * x[k].abs().max(1e-3);
                let mut up = x;
                let mut dn = x;
                up[k] += h;
                dn[k] -= h;
                let fd = (ctx.nll(&EtasParams::from_array(up)).unwrap() - ctx.nll(&EtasParams::from_array(dn)).unwrap())
                    / (2.0 * h);
                assert!(
                    (got.grad[k] - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
                    "{variant:?} {mass:?} component {k}: {} vs {fd}",
                    got.grad[k]
                );
            }
        }
    }

    #[test]
    fn rect_mass_limits() {
        let r = Region::new(-50.0, 50.0, -50.0, 50.0).unwrap();
        let (m, _, _) = rect_mass(0.0, 0.0, 0.01, 3.0, &r, false);
        assert!((m - 1.0).abs() < 1e-5);
        // at a corner a quarter of a tight kernel is inside
        let (m, _, _) = rect_mass(50.0, 50.0, 1e-6, 2.5, &r, false);
        assert_relative_eq!(m, 0.25, epsilon = 1e-9);
        // on an edge, half
        let (m, _, _) = rect_mass(0.0, 50.0, 1e-6, 2.5, &r, false);
        assert_relative_eq!(m, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn aic_identities() {
        let ll = LogLik::new(-10.0, -487.874, 5);
        assert_relative_eq!(aic(&ll, 8).unwrap(), 1011.748, epsilon = 1e-9);
        assert_eq!(aic(&LogLik::new(0.0, 0.0, 0), 1).unwrap(), 2.0);
        assert!(aic(&ll, 0).is_err());
    }

    #[test]
    fn burn_in_events_only_trigger() {
        let p = params();
        let bg = BackgroundField::uniform(region(), 0.1);
        let evs = vec![Event::new(1.0, 1.0, 1.0, 5.0, 6.0), Event::new(12.0, 1.1, 1.0, 5.0, 5.2)];
        let with = Catalog::new(evs.clone(), region(), 10.0, 20.0, 5.0).unwrap();
        let without = Catalog::new(evs[1..].to_vec(), region(), 10.0, 20.0, 5.0).unwrap();
        assert_eq!(with.n_target(), 1);
        let mag = MagnitudeModel::Exponential { beta: 2.0 };
        let lw = loglik(&with, &p, &mag, Some(&bg), Variant::SpatioTemporal).unwrap();
        let lo = loglik(&without, &p, &mag, Some(&bg), Variant::SpatioTemporal).unwrap();
        assert_eq!(lw.l1, lo.l1);
        assert!(lw.l2 != lo.l2);
    }
}
