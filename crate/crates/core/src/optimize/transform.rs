//! Maps between constrained ETAS parameters and unconstrained coordinates.
//!
//! `mu, A, alpha, c, D, gamma` are log-transformed, `p` and `q` map through
//! `ln(p - 1)` and `ln(q - 1)`.

use super::OptimError;
use crate::model::{EtasParams, ParamName};

fn forward(name: ParamName, v: f64) -> Result<f64, OptimError> {
    let shifted = match name {
        ParamName::P | ParamName::Q => v - 1.0,
        _ => v,
    };
    if !(shifted > 0.0) || !shifted.is_finite() {
        return Err(OptimError::Boundary {
            name: name.as_str(),
            value: v,
        });
    }
    Ok(shifted.ln())
}

fn backward(name: ParamName, z: f64) -> f64 {
    match name {
        ParamName::P | ParamName::Q => 1.0 + z.exp(),
        _ => z.exp(),
    }
}

/// `d(natural) / d(transformed)` at natural value `v`.
fn jacobian(name: ParamName, v: f64) -> f64 {
    match name {
        ParamName::P | ParamName::Q => v - 1.0,
        _ => v,
    }
}

pub fn transform_params(params: &EtasParams) -> Result<[f64; 8], OptimError> {
    let v = params.to_array();
    let mut z = [0.0; 8];
    for name in ParamName::ALL {
        z[name.index()] = forward(name, v[name.index()])?;
    }
    Ok(z)
}

pub fn untransform(z: &[f64; 8]) -> EtasParams {
    let mut v = [0.0; 8];
    for name in ParamName::ALL {
        v[name.index()] = backward(name, z[name.index()]);
    }
    EtasParams::from_array(v)
}

/// Free parameters of a fit in transformed coordinates; fixed ones keep the
/// values of `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpace {
    base: EtasParams,
    free: Vec<ParamName>,
}

impl ParamSpace {
    pub fn new(base: EtasParams, fixed: &[ParamName]) -> Result<Self, OptimError> {
        let free: Vec<ParamName> = ParamName::ALL.into_iter().filter(|n| !fixed.contains(n)).collect();
        for &name in &free {
            forward(name, base.get(name))?;
        }
        Ok(ParamSpace { base, free })
    }

    pub fn free(&self) -> &[ParamName] {
        &self.free
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn base(&self) -> &EtasParams {
        &self.base
    }

    pub fn is_fixed(&self, name: ParamName) -> bool {
        !self.free.contains(&name)
    }

    /// Transformed coordinates of the free parameters of `params`.
    pub fn to_free(&self, params: &EtasParams) -> Result<Vec<f64>, OptimError> {
        self.free.iter().map(|&n| forward(n, params.get(n))).collect()
    }

    pub fn from_free(&self, z: &[f64]) -> EtasParams {
        let mut p = self.base;
        for (&n, &zi) in self.free.iter().zip(z) {
            p.set(n, backward(n, zi));
        }
        p
    }

    /// Chain rule: a natural-space gradient to the free transformed coordinates.
    pub fn chain_gradient(&self, params: &EtasParams, grad: &[f64; 8]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&n| grad[n.index()] * jacobian(n, params.get(n)))
            .collect()
    }

    /// `d(natural)/d(transformed)` for each free parameter.
    pub fn jacobian(&self, params: &EtasParams) -> Vec<f64> {
        self.free.iter().map(|&n| jacobian(n, params.get(n))).collect()
    }
}
