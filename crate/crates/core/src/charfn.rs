//! Closed-form characteristic functions of displaced log-Libor and log-swap
//! returns under the affine approximation.
//!
//! With `u = iz + z^2`, `a = kappa* - iz (sigma.beta)` and
//! `d = sqrt(a^2 + |beta|^2 u eps^2)` (principal root), the log-return
//! characteristic function is
//!
//! ```text
//! phi(z) = exp(A(z) + B(z) v0 - u/2 * int |gamma|^2)
//! B = (a - d)/eps^2 * (1 - e^{-dT}) / (1 - g e^{-dT}),       g = (a - d)/(a + d)
//! A = kappa* theta* / eps^2 * ((a - d) T - 2 ln[(1 - g e^{-dT}) / (1 - g)])
//! ```
//!
//! which is the `e^{dT}` representation with numerator and denominator divided
//! by `e^{dT}`; nothing here ever exponentiates `+dT`, so large `Re(d) T`
//! cannot overflow.

use num_complex::Complex64;
use serde::Serialize;

use crate::affine::{effective_caplet_params, swap_effective_params, EffectiveCapletParams, SwapEffectiveParams};
use crate::error::{Error, Result};
use crate::market_data::{swap_context, Market};
use crate::model::LiborModel;

/// Below this vol-of-vol the deterministic-variance limit is used.
pub const EPS_DETERMINISTIC: f64 = 1e-8;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharFnParams {
    /// Effective mean-reversion speed.
    pub kappa: f64,
    /// Effective mean-reversion level.
    pub theta: f64,
    /// Vol-of-vol norm.
    pub eps: f64,
    /// Cross term `sigma^T beta`.
    pub sigma_beta: f64,
    /// `|beta|^2`.
    pub beta_sq: f64,
    /// `int_0^T |gamma|^2 ds`.
    pub gamma_var: f64,
    /// Horizon `T`.
    pub horizon: f64,
    /// Initial variance level `v0`.
    pub v0: f64,
}

impl CharFnParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| {
            Err(Error::Invariant {
                field: "charfn",
                reason,
            })
        };
        if !(self.eps >= 0.0) {
            return bad(format!("eps = {} must be non-negative", self.eps));
        }
        if !(self.horizon > 0.0) {
            return bad(format!("horizon = {} must be positive", self.horizon));
        }
        if !(self.v0 > 0.0) {
            return bad(format!("v0 = {} must be positive", self.v0));
        }
        if self.sigma_beta.abs() > self.eps * self.beta_sq.sqrt() * (1.0 + 1e-12) + 1e-300 {
            return bad(format!(
                "|sigma.beta| = {} exceeds eps |beta| = {}",
                self.sigma_beta.abs(),
                self.eps * self.beta_sq.sqrt()
            ));
        }
        Ok(())
    }

    /// Integrated variance `|beta|^2 int_0^T v(s) ds` of the deterministic
    /// limit `dv = kappa (theta - v) dt`.
    pub fn deterministic_variance(&self) -> f64 {
        let t = self.horizon;
        let integral = if self.kappa.abs() * t < 1e-12 {
            self.v0 * t
        } else {
            self.theta * t + (self.v0 - self.theta) * (-(-self.kappa * t).exp_m1()) / self.kappa
        };
        self.beta_sq * integral + self.gamma_var
    }

    /// The control-variate Black vol: `sqrt(|beta|^2 v0 + int|gamma|^2 / T)`.
    pub fn black_vol(&self) -> f64 {
        (self.beta_sq * self.v0 + self.gamma_var / self.horizon).sqrt()
    }
}

/// `ln(1 + x)` for complex `x`, accurate for small `|x|`.
fn ln_1p(x: Complex64) -> Complex64 {
    if x.norm() < 1e-5 {
        let x2 = x * x;
        x - x2 * 0.5 + x2 * x / 3.0 - x2 * x2 * 0.25
    } else {
        (Complex64::new(1.0, 0.0) + x).ln()
    }
}

pub fn heston_cf(z: Complex64, p: &CharFnParams) -> Complex64 {
    let u = I * z + z * z;
    let t = p.horizon;
    if p.eps < EPS_DETERMINISTIC {
        return (-0.5 * u * p.deterministic_variance()).exp();
    }
    let eps2 = p.eps * p.eps;
    let a = p.kappa - I * z * p.sigma_beta;
    let d = (a * a + p.beta_sq * eps2 * u).sqrt();
    let a_plus_d = a + d;
    // a - d without cancellation
    let a_minus_d = -(p.beta_sq * eps2 * u) / a_plus_d;
    let g = a_minus_d / a_plus_d;
    let e = (-d * t).exp();
    let one = Complex64::new(1.0, 0.0);
    let b = a_minus_d / eps2 * (one - e) / (one - g * e);
    let log_term = ln_1p(g * (one - e) / (one - g));
    let a_tilde = p.kappa * p.theta / eps2 * (a_minus_d * t - 2.0 * log_term);
    (a_tilde + b * p.v0 - 0.5 * u * p.gamma_var).exp()
}

/// Black log-return characteristic function `exp(-sigma^2 T (z^2 + iz) / 2)`.
pub fn black_cf(z: Complex64, sigma: f64, horizon: f64) -> Complex64 {
    (-0.5 * sigma * sigma * horizon * (z * z + I * z)).exp()
}

impl From<&EffectiveCapletParams> for CharFnParams {
    fn from(eff: &EffectiveCapletParams) -> Self {
        CharFnParams {
            kappa: eff.kappa,
            theta: eff.theta,
            eps: eff.eps,
            sigma_beta: eff.sigma_dot_beta,
            beta_sq: eff.beta_norm * eff.beta_norm,
            gamma_var: eff.gamma_sq * eff.expiry,
            horizon: eff.expiry,
            v0: eff.v0,
        }
    }
}

impl From<&SwapEffectiveParams> for CharFnParams {
    fn from(eff: &SwapEffectiveParams) -> Self {
        CharFnParams {
            kappa: eff.kappa_tilde,
            theta: eff.theta_tilde,
            eps: eff.eps_sq().sqrt(),
            sigma_beta: eff.sigma_dot_beta(),
            beta_sq: eff.beta_norm_sq(),
            gamma_var: eff.gamma_sq() * eff.expiry,
            horizon: eff.expiry,
            v0: eff.averaged.theta,
        }
    }
}

pub fn caplet_cf_params(j: usize, model: &LiborModel, market: &Market) -> Result<CharFnParams> {
    let eff = effective_caplet_params(j, model, market)?;
    Ok(CharFnParams::from(&eff))
}

pub fn swaption_cf_params(p: usize, q: usize, model: &LiborModel, market: &Market) -> Result<CharFnParams> {
    let ctx = swap_context(p, q, market)?;
    let eff = swap_effective_params(&ctx, model, market)?;
    Ok(CharFnParams::from(&eff))
}
