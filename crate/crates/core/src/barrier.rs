//! Scalar pieces of the constrained objectives, each returning its value
//! together with the analytic derivative.
//!
//! * [`psi_tilde`]: log barrier `-(1/μ)·ln(-x)` continued linearly (C¹) past
//!   `x = -1/μ²`, so it stays finite and differentiable for infeasible `x`.
//! * [`psi_star`]: the barrier applied to `ReLU(x - d) - 1`, which is exactly
//!   zero with zero slope on the feasible side `x <= d`.
//! * [`beta_loss`]: multiplier loss `mean β·(d - qc)` with `β = softplus(ρ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Barrier sharpness `mu` and cost limit `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub mu: f64,
    pub d: f64,
}

impl Default for BarrierParams {
    fn default() -> Self {
        Self { mu: 10.0, d: 10.0 }
    }
}

impl BarrierParams {
    /// The shifted barrier needs `mu > 1`.
    pub fn validate_shifted(&self) -> Result<()> {
        if !(self.mu > 1.0 && self.mu.is_finite()) {
            return Err(Error::param("mu", format!("must exceed 1, got {}", self.mu)));
        }
        if !self.d.is_finite() {
            return Err(Error::param("d", "must be finite"));
        }
        Ok(())
    }
}

/// Value and derivative of a scalar function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueGrad {
    pub value: f64,
    pub grad: f64,
}

/// Linear smoothed log barrier.
pub fn psi_tilde(x: f64, mu: f64) -> ValueGrad {
    let joint = -1.0 / (mu * mu);
    if x <= joint {
        ValueGrad {
            value: -(-x).ln() / mu,
            grad: -1.0 / (mu * x),
        }
    } else {
        ValueGrad {
            value: mu * x - (1.0 / (mu * mu)).ln() / mu + 1.0 / mu,
            grad: mu,
        }
    }
}

/// Shifted barrier `psi_tilde(ReLU(x - d) - 1)`. The subgradient at the kink
/// `x = d` is taken as 0.
pub fn psi_star(x: f64, mu: f64, d: f64) -> ValueGrad {
    let shifted = (x - d).max(0.0) - 1.0;
    let inner = psi_tilde(shifted, mu);
    let relu_grad = if x > d { 1.0 } else { 0.0 };
    ValueGrad {
        value: inner.value,
        grad: inner.grad * relu_grad,
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for positive arguments.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Multiplier loss and its gradient with respect to the raw parameter
/// `beta_raw` (where `β = softplus(beta_raw)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaLoss {
    pub loss: f64,
    /// `∂loss/∂β`.
    pub grad_beta: f64,
    /// `∂loss/∂beta_raw`.
    pub grad_raw: f64,
}

pub fn beta_loss(beta_raw: f64, d: f64, qc: &[f64]) -> Result<BetaLoss> {
    if qc.is_empty() {
        return Err(Error::Empty("beta loss batch"));
    }
    let beta = softplus(beta_raw);
    let slack = qc.iter().map(|q| d - q).sum::<f64>() / qc.len() as f64;
    Ok(BetaLoss {
        loss: beta * slack,
        grad_beta: slack,
        grad_raw: slack * sigmoid(beta_raw),
    })
}

/// Per-sample Lagrangian actor loss `α·logp - qr + β·qc`.
pub fn sac_lag_actor_term(qr: f64, qc: f64, beta: f64, alpha: f64, logp: f64) -> f64 {
    alpha * logp - qr + beta * qc
}

/// Per-sample barrier actor loss `α·logp - qr + psi_star(qc)`, where `qc` is
/// the larger of the two cost-critic estimates.
pub fn csac_lb_actor_term(qr: f64, qc: f64, alpha: f64, logp: f64, mu: f64, d: f64) -> f64 {
    alpha * logp - qr + psi_star(qc, mu, d).value
}
