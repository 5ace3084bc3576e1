//! Grid search over the scale parameter of the calibration and power time
//! scales.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{EtasError, Result};
use crate::timescale::{apply_scale, TimeScale};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleFamily {
    Calibration,
    Power,
}

impl ScaleFamily {
    pub fn with_omega(self, omega: f64) -> TimeScale {
        match self {
            ScaleFamily::Calibration => TimeScale::Calibration { omega },
            ScaleFamily::Power => TimeScale::Power { omega },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaScore {
    pub omega: f64,
    /// Log-likelihood on the scaled catalog.
    pub raw: Option<f64>,
    /// `raw + sum_targets ln phi'(t_i)`: the likelihood of the original times.
    pub adjusted: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct OmegaSearch<T> {
    pub best_omega: f64,
    pub best: T,
    pub scores: Vec<OmegaScore>,
}

/// Fits `fit` on the catalog rescaled at each `omega` and keeps the value
/// with the highest Jacobian-adjusted log-likelihood.
///
/// `fit` returns the fitted object and its total log-likelihood on the
/// scaled catalog.
pub fn grid_search_omega<T, F>(cat: &Catalog, family: ScaleFamily, grid: &[f64], fit: F) -> Result<OmegaSearch<T>>
where
    T: Send,
    F: Fn(&Catalog, &TimeScale) -> Result<(T, f64)> + Sync,
{
    if grid.is_empty() {
        return Err(EtasError::Param("omega grid is empty".into()));
    }
    if let Some(w) = grid.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(EtasError::Param(format!("omega must be positive, got {w}")));
    }
    let runs: Vec<(f64, Result<(T, f64, f64)>)> = grid
        .par_iter()
        .map(|&omega| {
            let run = || -> Result<(T, f64, f64)> {
                let scale = family.with_omega(omega);
                let scaled = apply_scale(cat, &scale)?;
                let mut jac = 0.0;
                for e in cat.targets() {
                    jac += scale
                        .ln_derivative(e.t)
                        .ok_or_else(|| EtasError::Domain("scale has no derivative".into()))?;
                }
                let (value, raw) = fit(&scaled, &scale)?;
                Ok((value, raw, raw + jac))
            };
            (omega, run())
        })
        .collect();

    let mut scores = Vec::with_capacity(runs.len());
    let mut best: Option<(f64, T, f64)> = None;
    for (omega, run) in runs {
        match run {
            Ok((value, raw, adjusted)) => {
                scores.push(OmegaScore {
                    omega,
                    raw: Some(raw),
                    adjusted: Some(adjusted),
                    error: None,
                });
                if best.as_ref().map_or(true, |b| adjusted > b.2) {
                    best = Some((omega, value, adjusted));
                }
            }
            Err(e) => scores.push(OmegaScore {
                omega,
                raw: None,
                adjusted: None,
                error: Some(e.to_string()),
            }),
        }
    }
    match best {
        Some((best_omega, best, _)) => Ok(OmegaSearch { best_omega, best, scores }),
        None => Err(EtasError::InsufficientData(format!(
            "every fit in the omega grid failed: {}",
            scores
                .iter()
                .filter_map(|s| s.error.as_ref().map(|e| format!("omega {}: {e}", s.omega)))
                .collect::<Vec<_>>()
                .join("; ")
        ))),
    }
}
