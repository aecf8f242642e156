//! Effective affine parameters obtained by freezing Libors at time zero.
//!
//! For a caplet on `L_j` the change to the `T_{j+1}`-forward measure shifts
//! the volatility drift; approximating `sqrt(v_j v_k)` by
//! `v_j sqrt(theta_k / theta_j)` keeps it affine in `v_j`:
//!
//! ```text
//! kappa_j* = kappa_j - sum_{k>j} sqrt(theta_k/theta_j) f_k(0) sigma_j^T beta_k
//! theta_j* = kappa_j theta_j / kappa_j*
//! f_k      = delta_k (L_k + alpha_k) / (1 + delta_k L_k)
//! ```
//!
//! For a swaption over `[T_p, T_q]` the expiry-wise volatilities are replaced
//! by one weighted process and the swap-rate loadings are frozen xi-weighted
//! sums of the Libor loadings.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market_data::{swap_context, Market, SwapContext};
use crate::model::LiborModel;

/// Frozen drift factor `delta_k (L_k(0) + alpha_k) / (1 + delta_k L_k(0))`.
pub fn drift_factor(model: &LiborModel, market: &Market, k: usize) -> f64 {
    let delta = market.delta(k);
    let libor = market.libor(k);
    delta * (libor + model.alpha(k)) / (1.0 + delta * libor)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveCapletParams {
    pub expiry_index: usize,
    /// `T_j`.
    pub expiry: f64,
    /// `kappa_j^{(j+1)}`.
    pub kappa: f64,
    /// `theta_j^{(j+1)}`.
    pub theta: f64,
    /// `v_j(0) = theta_j`.
    pub v0: f64,
    pub beta_norm: f64,
    /// `|gamma_j|^2`.
    pub gamma_sq: f64,
    pub eps: f64,
    /// `sigma_j^T beta_j`.
    pub sigma_dot_beta: f64,
}

pub fn effective_caplet_params(j: usize, model: &LiborModel, market: &Market) -> Result<EffectiveCapletParams> {
    market.check_expiry(j)?;
    let theta_j = model.theta(j);
    let correction: f64 = (j + 1..market.n())
        .map(|k| (model.theta(k) / theta_j).sqrt() * drift_factor(model, market, k) * model.sigma_dot_beta(j, k))
        .sum();
    let kappa = model.kappa(j) - correction;
    if !(kappa > 0.0) {
        return Err(Error::DegenerateDrift {
            what: format!("caplet expiry j = {j}"),
            kappa,
        });
    }
    Ok(EffectiveCapletParams {
        expiry_index: j,
        expiry: market.date(j),
        kappa,
        theta: model.kappa(j) * theta_j / kappa,
        v0: theta_j,
        beta_norm: model.beta_norm(j),
        gamma_sq: model.params.gamma_sq(j),
        eps: model.eps(j),
        sigma_dot_beta: model.sigma_dot_beta(j, j),
    })
}

/// Weighted volatility parameters of the averaged process `v^{p,q}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragedVolParams {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: Vec<f64>,
    pub sigma_bar: f64,
}

pub fn swap_averaged_vol_params(ctx: &SwapContext, model: &LiborModel) -> AveragedVolParams {
    let dim = model.loadings.dim();
    let mut avg = AveragedVolParams {
        kappa: 0.0,
        theta: 0.0,
        sigma: vec![0.0; dim],
        sigma_bar: 0.0,
    };
    for l in ctx.p..ctx.q {
        let w = ctx.weight(l);
        avg.kappa += w * model.kappa(l);
        avg.theta += w * model.theta(l);
        avg.sigma_bar += w * model.sigma_bar(l);
        for (s, x) in avg.sigma.iter_mut().zip(model.sigma(l)) {
            *s += w * x;
        }
    }
    avg
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwapEffectiveParams {
    pub p: usize,
    pub q: usize,
    /// `T_p`.
    pub expiry: f64,
    pub averaged: AveragedVolParams,
    /// `kappa~^{p,q}`.
    pub kappa_tilde: f64,
    /// `theta~^{p,q}`.
    pub theta_tilde: f64,
    /// `beta_{p,q}`.
    pub beta: Vec<f64>,
    /// `gamma_{p,q}`; empty without a Gaussian part.
    pub gamma: Vec<f64>,
}

impl SwapEffectiveParams {
    pub fn beta_norm_sq(&self) -> f64 {
        self.beta.iter().map(|x| x * x).sum()
    }

    pub fn gamma_sq(&self) -> f64 {
        self.gamma.iter().map(|x| x * x).sum()
    }

    /// `|sigma_{p,q}|^2 + sigma_bar_{p,q}^2`.
    pub fn eps_sq(&self) -> f64 {
        self.averaged.sigma.iter().map(|x| x * x).sum::<f64>() + self.averaged.sigma_bar.powi(2)
    }

    pub fn sigma_dot_beta(&self) -> f64 {
        dot(&self.averaged.sigma, &self.beta)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Loading multipliers `(L_j(0) + alpha_j) xi_j(0) / S_{p,q}(0)`, `j = p..q-1`.
pub fn swap_loading_coefficients(ctx: &SwapContext, model: &LiborModel, market: &Market) -> Vec<f64> {
    (ctx.p..ctx.q)
        .map(|j| (market.libor(j) + model.alpha(j)) * ctx.xi(j) / ctx.swap_rate)
        .collect()
}

pub fn swap_effective_params(ctx: &SwapContext, model: &LiborModel, market: &Market) -> Result<SwapEffectiveParams> {
    let averaged = swap_averaged_vol_params(ctx, model);
    let coeffs = swap_loading_coefficients(ctx, model, market);

    let dim = model.loadings.dim();
    let mut beta = vec![0.0; dim];
    for (j, c) in (ctx.p..ctx.q).zip(&coeffs) {
        for (b, e) in beta.iter_mut().zip(model.loadings.e(j)) {
            *b += c * model.beta_norm(j) * e;
        }
    }
    let gdim = model.params.gaussian_dim();
    let mut gamma = vec![0.0; gdim];
    if gdim > 0 {
        for (j, c) in (ctx.p..ctx.q).zip(&coeffs) {
            for (g, x) in gamma.iter_mut().zip(&model.params.gamma[j - 1]) {
                *g += c * x;
            }
        }
    }

    // sigma_{p,q}^T beta_k for every k that can appear in the correction.
    let n = market.n();
    let sigma_beta: Vec<f64> = (1..n)
        .map(|k| model.beta_norm(k) * dot(&averaged.sigma, model.loadings.e(k)))
        .collect();
    let mut correction = 0.0;
    for l in ctx.p..ctx.q {
        let inner: f64 = (l + 1..n)
            .map(|k| drift_factor(model, market, k) * sigma_beta[k - 1])
            .sum();
        correction += ctx.weight(l) * inner;
    }
    let kappa_tilde = averaged.kappa - correction;
    if !(kappa_tilde > 0.0) {
        return Err(Error::DegenerateDrift {
            what: format!("swap leg [{}, {}]", ctx.p, ctx.q),
            kappa: kappa_tilde,
        });
    }
    let theta_tilde = averaged.kappa * averaged.theta / kappa_tilde;
    Ok(SwapEffectiveParams {
        p: ctx.p,
        q: ctx.q,
        expiry: market.date(ctx.p),
        averaged,
        kappa_tilde,
        theta_tilde,
        beta,
        gamma,
    })
}

/// Convenience wrapper building the swap context first.
pub fn swap_effective_params_for(
    p: usize,
    q: usize,
    model: &LiborModel,
    market: &Market,
) -> Result<SwapEffectiveParams> {
    let ctx = swap_context(p, q, market)?;
    swap_effective_params(&ctx, model, market)
}
