//! Black-76, Carr–Madan inversion with a Black control variate, and implied
//! volatility.
//!
//! For a log-return characteristic function `phi` of `ln(F_T / F)` the call
//! value on forward `F`, strike `K`, scaled by `s`, is
//!
//! ```text
//! s * black76(F, T, sigma_B, K)
//!   + s * F / pi * int_0^inf Re[ (phi_B(z - i) - phi(z - i)) / (z (z - i)) * e^{-i z ln(K/F)} ] dz
//! ```

use std::f64::consts::PI;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::charfn::{black_cf, caplet_cf_params, heston_cf, swaption_cf_params, CharFnParams};
use crate::error::{Error, Result};
use crate::market_data::{swap_context, Market};
use crate::model::LiborModel;

const I: Complex64 = Complex64::new(0.0, 1.0);
const GL_ORDER: usize = 16;
const ADAPTIVE_MAX_DEPTH: u32 = 24;
/// Target absolute error of the raw half-line integral in adaptive mode.
const ADAPTIVE_TOL: f64 = 1e-14;
/// Largest acceptable price error, relative to the forward.
const ACCURACY_REL: f64 = 1e-9;
const MARTINGALE_TOL: f64 = 1e-8;
const FFT_PAD: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadMode {
    /// Adaptive bisection of Gauss–Legendre panels, per strike.
    Adaptive,
    /// Fixed uniform Gauss–Legendre panels; strikes share CF evaluations.
    Panels,
    /// FFT over a uniform log-strike grid with linear interpolation.
    Fft,
}

impl FromStr for QuadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(QuadMode::Adaptive),
            "panels" => Ok(QuadMode::Panels),
            "fft" => Ok(QuadMode::Fft),
            other => Err(Error::Config(format!("unknown quadrature mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Truncation bound of the frequency integral.
    pub z_max: f64,
    /// Node count: initial nodes for adaptive, total nodes for panels, FFT size.
    pub nodes: usize,
    pub mode: QuadMode,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            z_max: 400.0,
            nodes: 1024,
            mode: QuadMode::Adaptive,
        }
    }
}

impl QuadratureConfig {
    pub fn with_mode(mode: QuadMode) -> Self {
        let nodes = if mode == QuadMode::Fft { 4096 } else { 1024 };
        QuadratureConfig {
            mode,
            nodes,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z_max > 0.0 && self.z_max.is_finite()) {
            return Err(Error::Config(format!("z_max = {} must be positive", self.z_max)));
        }
        if self.nodes < 64 {
            return Err(Error::Config(format!("node count {} is below 64", self.nodes)));
        }
        Ok(())
    }

    fn panel_count(&self) -> usize {
        self.nodes.div_ceil(GL_ORDER)
    }
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Undiscounted Black-76 call value.
pub fn black76(forward: f64, horizon: f64, sigma: f64, strike: f64) -> f64 {
    black76_flagged(forward, horizon, sigma, strike).0
}

/// Black-76 with a flag set when the strike is non-positive and the forward
/// parity value `F - K` is returned.
pub fn black76_flagged(forward: f64, horizon: f64, sigma: f64, strike: f64) -> (f64, bool) {
    if strike <= 0.0 {
        return (forward - strike, true);
    }
    let total = sigma * horizon.max(0.0).sqrt();
    if total <= 0.0 {
        return ((forward - strike).max(0.0), false);
    }
    let d1 = ((forward / strike).ln() + 0.5 * total * total) / total;
    let d2 = d1 - total;
    (forward * norm_cdf(d1) - strike * norm_cdf(d2), false)
}

fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    for i in 0..order.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = order as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

thread_local! {
    static GL16: (Vec<f64>, Vec<f64>) = gauss_legendre(GL_ORDER);
}

fn gl_panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    GL16.with(|(x, w)| {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        half * x.iter().zip(w).map(|(xi, wi)| wi * f(mid + half * xi)).sum::<f64>()
    })
}

fn adaptive_panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32, err: &mut f64) -> f64 {
    let m = 0.5 * (a + b);
    let left = gl_panel(f, a, m);
    let right = gl_panel(f, m, b);
    let diff = (left + right - whole).abs();
    if diff <= tol || depth >= ADAPTIVE_MAX_DEPTH {
        *err += diff;
        return left + right;
    }
    adaptive_panel(f, a, m, left, 0.5 * tol, depth + 1, err) + adaptive_panel(f, m, b, right, 0.5 * tol, depth + 1, err)
}

/// Adaptive integral of `f` over `[0, z_max]`; returns the value and an error estimate.
fn integrate_adaptive(f: &dyn Fn(f64) -> f64, quad: &QuadratureConfig) -> (f64, f64) {
    let panels = quad.panel_count();
    let width = quad.z_max / panels as f64;
    let tol = ADAPTIVE_TOL / panels as f64;
    let mut err = 0.0;
    let mut total = 0.0;
    for p in 0..panels {
        let (a, b) = (p as f64 * width, (p + 1) as f64 * width);
        let whole = gl_panel(f, a, b);
        total += adaptive_panel(f, a, b, whole, tol, 0, &mut err);
    }
    (total, err)
}

/// The complex control-variate integrand before taking the real part.
pub fn cv_integrand(
    cf: &dyn Fn(Complex64) -> Complex64,
    z: f64,
    log_moneyness: f64,
    sigma_b: f64,
    horizon: f64,
) -> Complex64 {
    cv_kernel(cf, z, sigma_b, horizon) * (-I * z * log_moneyness).exp()
}

fn cv_kernel(cf: &dyn Fn(Complex64) -> Complex64, z: f64, sigma_b: f64, horizon: f64) -> Complex64 {
    let w = Complex64::new(z, -1.0);
    (black_cf(w, sigma_b, horizon) - cf(w)) / (z * w)
}

/// The plain inversion integrand `(1 - phi(z - i)) / (z (z - i)) e^{-izk}`.
pub fn plain_integrand(cf: &dyn Fn(Complex64) -> Complex64, z: f64, log_moneyness: f64) -> Complex64 {
    let w = Complex64::new(z, -1.0);
    (1.0 - cf(w)) / (z * w) * (-I * z * log_moneyness).exp()
}

fn check_martingale(cf: &dyn Fn(Complex64) -> Complex64) -> Result<()> {
    let dev = (cf(Complex64::new(0.0, -1.0)) - 1.0).norm();
    if !(dev <= MARTINGALE_TOL) {
        return Err(Error::Martingale(dev));
    }
    Ok(())
}

/// Pricing inputs shared by every strike of one option family.
#[derive(Debug, Clone, Copy)]
pub struct CvSetup {
    pub forward: f64,
    /// Multiplier applied to the undiscounted call value.
    pub scale: f64,
    pub sigma_b: f64,
    pub horizon: f64,
}

/// Carr–Madan price with Black control variate for one strike (already displaced).
pub fn carr_madan_cv(
    cf: &(dyn Fn(Complex64) -> Complex64 + Sync),
    setup: &CvSetup,
    strike: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    Ok(carr_madan_cv_batch(cf, setup, &[strike], quad)?[0])
}

/// Carr–Madan prices for a strike list sharing one characteristic function.
pub fn carr_madan_cv_batch(
    cf: &(dyn Fn(Complex64) -> Complex64 + Sync),
    setup: &CvSetup,
    strikes: &[f64],
    quad: &QuadratureConfig,
) -> Result<Vec<f64>> {
    quad.validate()?;
    check_martingale(cf)?;
    if !(setup.forward > 0.0) {
        return Err(Error::Invariant {
            field: "forward",
            reason: format!("forward {} must be positive", setup.forward),
        });
    }
    for &k in strikes {
        if k < 0.0 || k.is_nan() {
            return Err(Error::UnsupportedStrike {
                strike: k,
                displaced: k,
            });
        }
    }
    let corrections: Vec<Option<f64>> = match quad.mode {
        QuadMode::Adaptive => strikes
            .par_iter()
            .map(|&k| {
                if k == 0.0 {
                    return Ok(None);
                }
                let lm = (k / setup.forward).ln();
                let f = |z: f64| cv_integrand(cf, z, lm, setup.sigma_b, setup.horizon).re;
                let (value, err) = integrate_adaptive(&f, quad);
                let estimate = setup.forward / PI * err;
                let tolerance = ACCURACY_REL * setup.forward;
                if !(estimate <= tolerance) {
                    return Err(Error::Accuracy { estimate, tolerance });
                }
                Ok(Some(value))
            })
            .collect::<Result<Vec<_>>>()?,
        QuadMode::Panels => {
            let panels = quad.panel_count();
            let width = quad.z_max / panels as f64;
            let (x, w) = gauss_legendre(GL_ORDER);
            let grid: Vec<(f64, f64)> = (0..panels)
                .flat_map(|p| {
                    let mid = (p as f64 + 0.5) * width;
                    x.iter()
                        .zip(&w)
                        .map(move |(xi, wi)| (mid + 0.5 * width * xi, 0.5 * width * wi))
                        .collect::<Vec<_>>()
                })
                .collect();
            let kernel: Vec<Complex64> = grid
                .iter()
                .map(|&(z, _)| cv_kernel(cf, z, setup.sigma_b, setup.horizon))
                .collect();
            strikes
                .iter()
                .map(|&k| {
                    if k == 0.0 {
                        return None;
                    }
                    let lm = (k / setup.forward).ln();
                    Some(
                        grid.iter()
                            .zip(&kernel)
                            .map(|(&(z, wz), h)| wz * (h * (-I * z * lm).exp()).re)
                            .sum(),
                    )
                })
                .collect()
        }
        QuadMode::Fft => {
            let grid = fft_grid(cf, setup, quad);
            strikes
                .iter()
                .map(|&k| {
                    if k == 0.0 {
                        None
                    } else {
                        Some(grid.interpolate((k / setup.forward).ln()))
                    }
                })
                .collect()
        }
    };
    Ok(strikes
        .iter()
        .zip(corrections)
        .map(|(&k, corr)| match corr {
            None => setup.scale * setup.forward,
            Some(c) => setup.scale * (black76(setup.forward, setup.horizon, setup.sigma_b, k) + setup.forward / PI * c),
        })
        .collect())
}

/// Integral values on a uniform log-moneyness grid.
struct FftGrid {
    k0: f64,
    dk: f64,
    values: Vec<f64>,
}

impl FftGrid {
    fn interpolate(&self, lm: f64) -> f64 {
        let pos = ((lm - self.k0) / self.dk).clamp(0.0, (self.values.len() - 2) as f64);
        let i = pos.floor() as usize;
        let t = pos - i as f64;
        (1.0 - t) * self.values[i] + t * self.values[i + 1]
    }
}

fn fft_grid(cf: &dyn Fn(Complex64) -> Complex64, setup: &CvSetup, quad: &QuadratureConfig) -> FftGrid {
    let n = quad.nodes;
    let size = n * FFT_PAD;
    let eta = quad.z_max / n as f64;
    let dk = 2.0 * PI / (size as f64 * eta);
    let k0 = -0.5 * size as f64 * dk;
    let mut buf: Vec<Complex64> = (0..size)
        .map(|l| {
            if l >= n {
                return Complex64::new(0.0, 0.0);
            }
            let z = l as f64 * eta;
            let h = if l == 0 {
                // symmetric limit at the removable singularity
                let eps = 1e-4;
                Complex64::new(
                    0.5 * (cv_kernel(cf, eps, setup.sigma_b, setup.horizon)
                        + cv_kernel(cf, -eps, setup.sigma_b, setup.horizon))
                    .re,
                    0.0,
                )
            } else {
                cv_kernel(cf, z, setup.sigma_b, setup.horizon)
            };
            let simpson = if l == 0 || l == n - 1 {
                1.0
            } else if l % 2 == 1 {
                4.0
            } else {
                2.0
            } * eta
                / 3.0;
            h * (-I * z * k0).exp() * simpson
        })
        .collect();
    FftPlanner::new().plan_fft_forward(size).process(&mut buf);
    FftGrid {
        k0,
        dk,
        values: buf.iter().map(|c| c.re).collect(),
    }
}

fn displaced_strikes(strikes: &[f64], alpha: f64) -> Result<Vec<f64>> {
    strikes
        .iter()
        .map(|&k| {
            let displaced = k + alpha;
            if displaced < 0.0 || displaced.is_nan() {
                Err(Error::UnsupportedStrike { strike: k, displaced })
            } else {
                Ok(displaced)
            }
        })
        .collect()
}

fn price_with_params(p: &CharFnParams, setup: &CvSetup, strikes: &[f64], quad: &QuadratureConfig) -> Result<Vec<f64>> {
    p.validate()?;
    let cf = |z: Complex64| heston_cf(z, p);
    carr_madan_cv_batch(&cf, setup, strikes, quad)
}

/// Caplet on `L_j` paying `delta_j (L_j(T_j) - K)^+` at `T_{j+1}`.
pub fn caplet_price(
    j: usize,
    strike: f64,
    model: &LiborModel,
    market: &Market,
    quad: &QuadratureConfig,
) -> Result<f64> {
    Ok(caplet_prices(j, &[strike], model, market, quad)?[0])
}

pub fn caplet_prices(
    j: usize,
    strikes: &[f64],
    model: &LiborModel,
    market: &Market,
    quad: &QuadratureConfig,
) -> Result<Vec<f64>> {
    let p = caplet_cf_params(j, model, market)?;
    let alpha = model.alpha(j);
    let displaced = displaced_strikes(strikes, alpha)?;
    let setup = caplet_setup(j, &p, model, market);
    price_with_params(&p, &setup, &displaced, quad)
}

/// Forward, scale and control-variate vol for the caplet on `L_j`.
pub fn caplet_setup(j: usize, p: &CharFnParams, model: &LiborModel, market: &Market) -> CvSetup {
    CvSetup {
        forward: market.libor(j) + model.alpha(j),
        scale: market.delta(j) * market.bond(j + 1),
        sigma_b: p.black_vol(),
        horizon: p.horizon,
    }
}

/// Payer swaption on `[T_p, T_q]` with fixed rate `K`.
pub fn swaption_price(
    p: usize,
    q: usize,
    strike: f64,
    model: &LiborModel,
    market: &Market,
    quad: &QuadratureConfig,
) -> Result<f64> {
    Ok(swaption_prices(p, q, &[strike], model, market, quad)?[0])
}

pub fn swaption_prices(
    p: usize,
    q: usize,
    strikes: &[f64],
    model: &LiborModel,
    market: &Market,
    quad: &QuadratureConfig,
) -> Result<Vec<f64>> {
    let ctx = swap_context(p, q, market)?;
    let params = swaption_cf_params(p, q, model, market)?;
    let displaced = displaced_strikes(strikes, 0.0)?;
    let setup = CvSetup {
        forward: ctx.swap_rate,
        scale: ctx.annuity,
        sigma_b: params.black_vol(),
        horizon: params.horizon,
    };
    price_with_params(&params, &setup, &displaced, quad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpliedVol {
    pub vol: f64,
    /// Set when the target sits on the intrinsic lower bound.
    pub at_lower_bound: bool,
}

/// Black vol reproducing `target = scale * black76(F, T, vol, K)`.
pub fn implied_vol(target: f64, forward: f64, strike: f64, horizon: f64, scale: f64) -> Result<ImpliedVol> {
    let lower = scale * (forward - strike).max(0.0);
    let upper = scale * forward;
    let slack = 1e-14 * scale.max(1.0);
    if !(target >= lower - slack && target < upper) || strike <= 0.0 {
        return Err(Error::Arbitrage {
            price: target,
            lower,
            upper,
        });
    }
    if target <= lower + slack {
        return Ok(ImpliedVol {
            vol: 0.0,
            at_lower_bound: true,
        });
    }
    let f = |s: f64| scale * black76(forward, horizon, s, strike) - target;
    let vol = brent(f, 1e-6, 5.0, 1e-14, 200)?;
    Ok(ImpliedVol {
        vol,
        at_lower_bound: false,
    })
}

fn brent(f: impl Fn(f64) -> f64, lo: f64, hi: f64, xtol: f64, max_iter: usize) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa.abs() < 1e-16 {
        return Ok(a);
    }
    if fa * fb > 0.0 {
        return Err(Error::RootFinding(format!(
            "no sign change on [{lo}, {hi}]: f = ({fa:.3e}, {fb:.3e})"
        )));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * m * s, 1.0 - s)
            } else {
                let q = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0)),
                    (q - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Err(Error::RootFinding(format!(
        "no convergence after {max_iter} iterations"
    )))
}
