//! ETAS parameters, magnitude laws and the triggering kernels.
//!
//! The triggering rate contributed by a parent `(t_i, x_i, y_i, m_i)` is
//! `kappa(m_i) * g(t - t_i) * f(x - x_i, y - y_i; m_i)` with
//!
//! * `kappa(m) = A exp(alpha (m - m0))`
//! * `g(s) = (p - 1)/c * (1 + s/c)^(-p)`
//! * `f(dx, dy; m) = (q - 1)/(pi sigma(m)) * (1 + r^2/sigma(m))^(-q)`,
//!   `sigma(m) = D exp(gamma (m - m0))`.
//!
//! `g` and `f` are proper densities so their closed-form CDFs are exposed too.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, gamma_lr, ln_gamma};

use crate::catalog::Catalog;
use crate::error::{EtasError, Result};

/// Space-time triggering parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtasParams {
    pub mu: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub alpha: f64,
    pub c: f64,
    pub p: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub gamma: f64,
    pub q: f64,
}

/// Parameter names in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamName {
    #[serde(rename = "mu")]
    Mu,
    #[serde(rename = "A")]
    A,
    #[serde(rename = "alpha")]
    Alpha,
    #[serde(rename = "c")]
    C,
    #[serde(rename = "p")]
    P,
    #[serde(rename = "D")]
    D,
    #[serde(rename = "gamma")]
    Gamma,
    #[serde(rename = "q")]
    Q,
}

impl ParamName {
    pub const ALL: [ParamName; 8] = [
        ParamName::Mu,
        ParamName::A,
        ParamName::Alpha,
        ParamName::C,
        ParamName::P,
        ParamName::D,
        ParamName::Gamma,
        ParamName::Q,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::Mu => "mu",
            ParamName::A => "A",
            ParamName::Alpha => "alpha",
            ParamName::C => "c",
            ParamName::P => "p",
            ParamName::D => "D",
            ParamName::Gamma => "gamma",
            ParamName::Q => "q",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = EtasError;

    fn from_str(s: &str) -> Result<Self> {
        ParamName::ALL
            .iter()
            .copied()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| EtasError::Param(format!("unknown parameter '{s}'")))
    }
}

impl EtasParams {
    /// Starting point for fits: `mu = n_target / duration`, the remaining
    /// values a subcritical, typical-catalog guess.
    pub fn initial(n_target: usize, duration: f64) -> Self {
        EtasParams {
            mu: (n_target.max(1) as f64) / duration,
            a: 0.1,
            alpha: 1.0,
            c: 0.01,
            p: 1.2,
            d: 0.01,
            gamma: 1.0,
            q: 1.8,
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        [self.mu, self.a, self.alpha, self.c, self.p, self.d, self.gamma, self.q]
    }

    pub fn from_array(v: [f64; 8]) -> Self {
        EtasParams {
            mu: v[0],
            a: v[1],
            alpha: v[2],
            c: v[3],
            p: v[4],
            d: v[5],
            gamma: v[6],
            q: v[7],
        }
    }

    pub fn get(&self, name: ParamName) -> f64 {
        self.to_array()[name.index()]
    }

    pub fn set(&mut self, name: ParamName, value: f64) {
        let mut v = self.to_array();
        v[name.index()] = value;
        *self = Self::from_array(v);
    }

    /// `mu, c, D > 0`, `A, alpha, gamma >= 0`, `p, q > 1`.
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu > 0.0
            && self.a >= 0.0
            && self.alpha >= 0.0
            && self.c > 0.0
            && self.p > 1.0
            && self.d > 0.0
            && self.gamma >= 0.0
            && self.q > 1.0
            && self.to_array().iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(EtasError::Param(format!("parameters violate constraints: {self:?}")))
        }
    }

    #[inline]
    pub(crate) fn productivity(&self, dm: f64) -> f64 {
        self.a * (self.alpha * dm).exp()
    }

    #[inline]
    pub(crate) fn sigma(&self, dm: f64) -> f64 {
        self.d * (self.gamma * dm).exp()
    }

    #[inline]
    pub(crate) fn g(&self, lag: f64) -> f64 {
        (self.p - 1.0) / self.c * (-self.p * (lag / self.c).ln_1p()).exp()
    }

    /// Temporal CDF `1 - (1 + s/c)^(1-p)`; 1 at infinity.
    #[inline]
    pub(crate) fn g_cdf(&self, lag: f64) -> f64 {
        if lag == f64::INFINITY {
            return 1.0;
        }
        -((1.0 - self.p) * (lag / self.c).ln_1p()).exp_m1()
    }

    #[inline]
    pub(crate) fn f(&self, r2: f64, sigma: f64) -> f64 {
        (self.q - 1.0) / (PI * sigma) * (-self.q * (r2 / sigma).ln_1p()).exp()
    }
}

fn check_mag(m: f64, m0: f64) -> Result<()> {
    if m < m0 || !m.is_finite() {
        return Err(EtasError::Domain(format!("magnitude {m} below threshold {m0}")));
    }
    Ok(())
}

/// Expected number of direct aftershocks of a magnitude-`m` event.
pub fn kappa(params: &EtasParams, m: f64, m0: f64) -> Result<f64> {
    check_mag(m, m0)?;
    Ok(params.productivity(m - m0))
}

/// Omori-type density of the triggering lag.
pub fn temporal_kernel(params: &EtasParams, lag: f64) -> Result<f64> {
    if !(lag >= 0.0) {
        return Err(EtasError::Domain(format!("negative lag {lag}")));
    }
    Ok(params.g(lag))
}

pub fn temporal_kernel_cdf(params: &EtasParams, lag: f64) -> Result<f64> {
    if !(lag >= 0.0) {
        return Err(EtasError::Domain(format!("negative lag {lag}")));
    }
    Ok(params.g_cdf(lag))
}

/// Spatial spread `sigma(m) = D exp(gamma (m - m0))` in squared degrees.
pub fn spatial_sigma(params: &EtasParams, m: f64, m0: f64) -> f64 {
    params.sigma(m - m0)
}

pub fn spatial_kernel(params: &EtasParams, dx: f64, dy: f64, m: f64, m0: f64) -> Result<f64> {
    check_mag(m, m0)?;
    Ok(params.f(dx * dx + dy * dy, params.sigma(m - m0)))
}

/// Mass of the spatial kernel within distance `r` of the parent:
/// `1 - (1 + r^2/sigma(m))^(1-q)`.
pub fn spatial_kernel_disk_mass(params: &EtasParams, r: f64, m: f64, m0: f64) -> Result<f64> {
    check_mag(m, m0)?;
    if r == f64::INFINITY {
        return Ok(1.0);
    }
    let sigma = params.sigma(m - m0);
    Ok(-((1.0 - params.q) * (r * r / sigma).ln_1p()).exp_m1())
}

/// Mean offspring count per event, `A * E[exp(alpha (m - m0))]` under the
/// magnitude law; `A beta / (beta - alpha)` for the exponential law.
pub fn branching_ratio(params: &EtasParams, magnitude: &MagnitudeModel) -> Result<f64> {
    Ok(params.a * magnitude.mean_exp(params.alpha)?)
}

pub fn is_subcritical(params: &EtasParams, magnitude: &MagnitudeModel) -> bool {
    branching_ratio(params, magnitude).map_or(false, |n| n < 1.0)
}

/// Distribution of the magnitude excess `m - m0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MagnitudeModel {
    Exponential { beta: f64 },
    Gamma { shape: f64, rate: f64 },
}

impl MagnitudeModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            MagnitudeModel::Exponential { beta } => beta > 0.0 && beta.is_finite(),
            MagnitudeModel::Gamma { shape, rate } => shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(EtasError::Param(format!("invalid magnitude model {self:?}")))
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            MagnitudeModel::Exponential { .. } => 1,
            MagnitudeModel::Gamma { .. } => 2,
        }
    }

    /// Log-density of the excess `x = m - m0 >= 0`.
    pub(crate) fn ln_pdf_excess(&self, x: f64) -> f64 {
        match *self {
            MagnitudeModel::Exponential { beta } => beta.ln() - beta * x,
            MagnitudeModel::Gamma { shape, rate } => {
                if x == 0.0 {
                    return match shape.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => rate.ln(),
                        _ => f64::NEG_INFINITY,
                    };
                }
                shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)
            }
        }
    }

    pub fn pdf(&self, m: f64, m0: f64) -> Result<f64> {
        check_mag(m, m0)?;
        Ok(self.ln_pdf_excess(m - m0).exp())
    }

    pub fn cdf(&self, m: f64, m0: f64) -> f64 {
        let x = m - m0;
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            MagnitudeModel::Exponential { beta } => -(-beta * x).exp_m1(),
            MagnitudeModel::Gamma { shape, rate } => gamma_lr(shape, rate * x),
        }
    }

    /// `E[exp(alpha X)]` for the excess `X`; finite only when `alpha` is
    /// below the exponential decay rate.
    pub fn mean_exp(&self, alpha: f64) -> Result<f64> {
        match *self {
            MagnitudeModel::Exponential { beta } => {
                if beta <= alpha {
                    return Err(EtasError::Supercritical { alpha, beta });
                }
                Ok(beta / (beta - alpha))
            }
            MagnitudeModel::Gamma { shape, rate } => {
                if rate <= alpha {
                    return Err(EtasError::Supercritical { alpha, beta: rate });
                }
                Ok((1.0 - alpha / rate).powf(-shape))
            }
        }
    }

    /// Exponential decay rate of the excess tail (beta, or the gamma rate).
    pub fn tail_rate(&self) -> f64 {
        match *self {
            MagnitudeModel::Exponential { beta } => beta,
            MagnitudeModel::Gamma { rate, .. } => rate,
        }
    }

    pub fn sample_excess<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MagnitudeModel::Exponential { beta } => Exp::new(beta).expect("validated beta").sample(rng),
            MagnitudeModel::Gamma { shape, rate } => Gamma::new(shape, 1.0 / rate).expect("validated gamma").sample(rng),
        }
    }

    /// Magnitude log-likelihood over the target events.
    pub fn loglik(&self, cat: &Catalog) -> f64 {
        cat.targets().map(|e| self.ln_pdf_excess(e.mag - cat.m0())).sum()
    }
}

/// Closed-form `beta = N' / sum(m_i - m0)` over target events.
pub fn magnitude_mle_exponential(cat: &Catalog) -> Result<f64> {
    let n = cat.n_target();
    let excess: f64 = cat.targets().map(|e| e.mag - cat.m0()).sum();
    if n == 0 {
        return Err(EtasError::InsufficientData("no target events".into()));
    }
    if excess <= 0.0 {
        return Err(EtasError::Domain("every target magnitude equals m0; beta is unbounded".into()));
    }
    Ok(n as f64 / excess)
}

/// Gamma maximum likelihood for the excess via Newton on the shape.
///
/// Requires every target excess to be strictly positive; lower `m0` by half a
/// magnitude bin for binned catalogs.
pub fn magnitude_mle_gamma(cat: &Catalog) -> Result<(f64, f64)> {
    let xs: Vec<f64> = cat.targets().map(|e| e.mag - cat.m0()).collect();
    if xs.len() < 2 {
        return Err(EtasError::InsufficientData("gamma fit needs at least two target events".into()));
    }
    if xs.iter().any(|&x| x <= 0.0) {
        return Err(EtasError::Domain(
            "gamma magnitude fit needs every target magnitude strictly above m0".into(),
        ));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let mean_ln = xs.iter().map(|x| x.ln()).sum::<f64>() / n;
    let s = mean.ln() - mean_ln;
    if s <= 0.0 {
        return Err(EtasError::Domain("all magnitude excesses equal; gamma shape is unbounded".into()));
    }
    // Minka's starting point, then Newton on ln(k) - digamma(k) = s.
    let mut k = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    for _ in 0..100 {
        let f = k.ln() - digamma(k) - s;
        let df = 1.0 / k - trigamma(k);
        let next = k - f / df;
        let next = if next > 0.0 { next } else { k / 2.0 };
        if (next - k).abs() <= 1e-14 * k {
            k = next;
            break;
        }
        k = next;
    }
    Ok((k, k / mean))
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
