//! Penalty scaling and the bounded blend weight.
//!
//! The filter never evaluates the unbounded penalty `psi` directly. It uses
//! `w = psi / (1 + psi) = phi_mu(d) * phi_nu(s)`, which stays in `[0, 1]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PenaltyError {
    #[error("transition threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("penalty is unbounded at blend weight 1")]
    PenaltyUnbounded,
}

/// Shape of the smooth step used by [`transition`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Blend {
    /// `1 - 3u^2 + 2u^3`, C¹.
    #[default]
    Cubic,
    /// `1 - (10u^3 - 15u^4 + 6u^5)`, C².
    Quintic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyParams {
    pub mu: f64,
    pub nu: f64,
    #[serde(default)]
    pub blend: Blend,
}

impl PenaltyParams {
    pub fn new(mu: f64, nu: f64) -> Result<Self, PenaltyError> {
        Self::with_blend(mu, nu, Blend::Cubic)
    }

    pub fn with_blend(mu: f64, nu: f64, blend: Blend) -> Result<Self, PenaltyError> {
        for t in [mu, nu] {
            if !(t > 0.0) || !t.is_finite() {
                return Err(PenaltyError::InvalidThreshold(t));
            }
        }
        Ok(Self { mu, nu, blend })
    }
}

#[inline]
pub(crate) fn step(blend: Blend, z: f64, tau: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    if z >= tau {
        return 0.0;
    }
    let u = z / tau;
    match blend {
        Blend::Cubic => 1.0 - u * u * (3.0 - 2.0 * u),
        Blend::Quintic => 1.0 - u * u * u * (10.0 - u * (15.0 - 6.0 * u)),
    }
}

/// Cubic smooth step: 1 for `z <= 0`, 0 for `z >= tau`.
pub fn transition(z: f64, tau: f64) -> Result<f64, PenaltyError> {
    transition_with(Blend::Cubic, z, tau)
}

pub fn transition_with(blend: Blend, z: f64, tau: f64) -> Result<f64, PenaltyError> {
    if !(tau > 0.0) {
        return Err(PenaltyError::InvalidThreshold(tau));
    }
    Ok(step(blend, z, tau))
}

/// `w = phi_mu(d) * phi_nu(s)`; exactly 0 whenever `d >= mu` or `s >= nu`.
#[inline]
pub fn blend_weight(d: f64, s: f64, params: &PenaltyParams) -> f64 {
    if d >= params.mu || s >= params.nu {
        return 0.0;
    }
    step(params.blend, d, params.mu) * step(params.blend, s, params.nu)
}

/// `psi = w / (1 - w)`, for diagnostics.
pub fn penalty_value(d: f64, s: f64, params: &PenaltyParams) -> Result<f64, PenaltyError> {
    let w = blend_weight(d, s, params);
    if w >= 1.0 {
        return Err(PenaltyError::PenaltyUnbounded);
    }
    Ok(w / (1.0 - w))
}
