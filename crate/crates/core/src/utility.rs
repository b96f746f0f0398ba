//! Concave utilities and the per-flow congestion-control step.
//!
//! The congestion step maximizes `U(x) − a·x − (ρ/2)(x − x_prev)²` over the
//! rate box `[m, M]`, where `a = z_{s_f}^{d_f} + ρ·Δr_f` couples the flow to
//! the network. The objective is strictly concave, so the clamped stationary
//! point is the constrained maximizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Utility of a single flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    /// `w · log x`
    WeightedLog { weight: f64 },
    /// `w · x^{1−γ} / (1−γ)`, γ > 0, γ ≠ 1
    AlphaFair { weight: f64, gamma: f64 },
}

impl UtilitySpec {
    pub fn weight(&self) -> f64 {
        match *self {
            UtilitySpec::WeightedLog { weight } | UtilitySpec::AlphaFair { weight, .. } => weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.weight();
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "utility weight must be positive, got {w}"
            )));
        }
        if let UtilitySpec::AlphaFair { gamma, .. } = *self {
            if !(gamma > 0.0 && gamma.is_finite()) || gamma == 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "fairness exponent must be positive and not 1, got {gamma}"
                )));
            }
        }
        Ok(())
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        check_positive(x)?;
        Ok(match *self {
            UtilitySpec::WeightedLog { weight } => weight * x.ln(),
            UtilitySpec::AlphaFair { weight, gamma } => {
                weight * x.powf(1.0 - gamma) / (1.0 - gamma)
            }
        })
    }

    pub fn grad(&self, x: f64) -> Result<f64> {
        check_positive(x)?;
        Ok(self.grad_unchecked(x))
    }

    pub(crate) fn grad_unchecked(&self, x: f64) -> f64 {
        match *self {
            UtilitySpec::WeightedLog { weight } => weight / x,
            UtilitySpec::AlphaFair { weight, gamma } => weight * x.powf(-gamma),
        }
    }

    /// Inverse of the derivative: the `x > 0` with `U'(x) = g`, for `g > 0`.
    pub(crate) fn grad_inverse(&self, g: f64) -> f64 {
        match *self {
            UtilitySpec::WeightedLog { weight } => weight / g,
            UtilitySpec::AlphaFair { weight, gamma } => (weight / g).powf(1.0 / gamma),
        }
    }
}

fn check_positive(x: f64) -> Result<()> {
    if x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "utility evaluated at non-positive rate {x}"
        )))
    }
}

/// Rate box `[min, max]` of one flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBox {
    pub min: f64,
    pub max: f64,
}

impl RateBox {
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.min, self.max)
    }
}

/// Closed-form congestion step for `w · log x`.
pub fn congestion_step_closed_form(
    weight: f64,
    a: f64,
    x_prev: f64,
    rho: f64,
    bounds: RateBox,
) -> Result<f64> {
    if !(rho > 0.0) || !(weight > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "closed-form congestion step needs rho > 0 and w > 0 (rho = {rho}, w = {weight})"
        )));
    }
    // positive root of ρx² + (a − ρ x_prev)x − w = 0
    let c = a - rho * x_prev;
    let disc = (c * c + 4.0 * rho * weight).sqrt();
    // x = x_prev/2 − a/(2ρ) + sqrt(w/ρ + (a − ρ x_prev)²/(4ρ²)), rationalized when c > 0
    let x = if c > 0.0 {
        2.0 * weight / (c + disc)
    } else {
        (disc - c) / (2.0 * rho)
    };
    Ok(bounds.clamp(x))
}

/// Bisection on the derivative of the 1-D objective; works for any concave utility.
pub fn congestion_step_numeric(
    utility: &UtilitySpec,
    a: f64,
    x_prev: f64,
    rho: f64,
    bounds: RateBox,
) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rho must be positive, got {rho}"
        )));
    }
    let slope = |x: f64| utility.grad_unchecked(x) - a - rho * (x - x_prev);
    let (mut lo, mut hi) = (bounds.min, bounds.max);
    if slope(lo) <= 0.0 {
        return Ok(lo);
    }
    if slope(hi) >= 0.0 {
        return Ok(hi);
    }
    // run to adjacent floats; well inside the 1e-12·max(1, M) target
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Congestion step dispatching to the closed form when it applies.
pub fn congestion_step(
    utility: &UtilitySpec,
    a: f64,
    x_prev: f64,
    rho: f64,
    bounds: RateBox,
) -> Result<f64> {
    match *utility {
        UtilitySpec::WeightedLog { weight } => {
            congestion_step_closed_form(weight, a, x_prev, rho, bounds)
        }
        UtilitySpec::AlphaFair { .. } => congestion_step_numeric(utility, a, x_prev, rho, bounds),
    }
}

/// `argmax_{x ∈ box} K·U(x) − price·x`, the queue-price congestion controller.
pub fn price_response(utility: &UtilitySpec, scale: f64, price: f64, bounds: RateBox) -> f64 {
    if price <= 0.0 {
        return bounds.max;
    }
    bounds.clamp(utility.grad_inverse(price / scale))
}
