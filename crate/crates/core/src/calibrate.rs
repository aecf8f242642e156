//! Per-maturity calibration of `(|beta_j|, kappa_j, eps_j, rho_j)` to caplet
//! price panels, from the last expiry down to the first.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{black76, caplet_prices, implied_vol, QuadMode, QuadratureConfig};
use crate::market_data::{CapletPanel, Market, QuoteKind};
use crate::model::{LiborModel, ModelParams};

/// Objective value returned when the candidate cannot be priced.
pub const PENALTY: f64 = 1e6;

/// Box constraints in the order `(|beta|, kappa, eps, rho)`.
pub const LOWER: [f64; 4] = [1e-4, 1e-3, 1e-3, -0.999];
pub const UPPER: [f64; 4] = [2.0, 20.0, 10.0, 0.999];

/// The base starting point; the other two starts scale it by 0.5 and 1.5.
pub const BASE_START: [f64; 4] = [0.15, 1.0, 1.0, -0.5];

/// A cold start replaces the warm-start fit only when better by this much.
pub const WARM_MARGIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    /// Objective evaluations allowed per simplex run.
    pub max_evals: usize,
    /// Spread of simplex values below which a run stops.
    pub f_tol: f64,
    /// Simplex diameter (in transformed coordinates) below which a run stops.
    pub x_tol: f64,
    /// Further simplex runs from the incumbent after the multi-start.
    pub restarts: usize,
    pub quad: QuadratureConfig,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            max_evals: 2000,
            f_tol: 1e-13,
            x_tol: 1e-9,
            restarts: 2,
            quad: QuadratureConfig::with_mode(QuadMode::Panels),
        }
    }
}

/// Fitted parameters and diagnostics for one expiry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaturityFit {
    pub expiry: usize,
    pub beta_norm: f64,
    pub kappa: f64,
    pub eps: f64,
    pub rho: f64,
    /// Mean relative price error at the optimum.
    pub objective: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Names of parameters that ended within 1e-6 (relative) of a bound.
    pub at_bounds: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// In decreasing expiry order, as fitted.
    pub fits: Vec<MaturityFit>,
    /// Expiries without a panel, held at their initial values.
    pub skipped: Vec<usize>,
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    pub corr_decay: f64,
    /// The full parameter set after calibration.
    pub params: ModelParams,
    /// Mean relative price error over every fitted quote.
    pub mean_relative_error: f64,
}

/// One line of the fit report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRow {
    pub maturity: usize,
    pub strike: f64,
    pub market_price: f64,
    pub model_price: f64,
    pub market_ivol: Option<f64>,
    pub model_ivol: Option<f64>,
}

/// Quotes of a panel as prices; vol quotes go through Black-76 with the
/// displaced forward and the `delta_j B_{j+1}(0)` prefactor.
pub fn panel_prices(panel: &CapletPanel, model: &LiborModel, market: &Market) -> Result<Vec<f64>> {
    let j = panel.expiry;
    market.check_expiry(j)?;
    match panel.kind {
        QuoteKind::Price => Ok(panel.quotes.clone()),
        QuoteKind::Vol => {
            let alpha = model.alpha(j);
            let scale = market.delta(j) * market.bond(j + 1);
            let forward = market.libor(j) + alpha;
            Ok(panel
                .strikes
                .iter()
                .zip(&panel.quotes)
                .map(|(&k, &vol)| scale * black76(forward, market.date(j), vol, k + alpha))
                .collect())
        }
    }
}

fn mean_relative_error(model: &[f64], market: &[f64]) -> f64 {
    model.iter().zip(market).map(|(m, p)| (m - p).abs() / p).sum::<f64>() / market.len() as f64
}

/// Mean relative price error of `candidate = (|beta|, kappa, eps, rho)` at
/// expiry `j`, with every other expiry taken from `model`.
pub fn objective(
    j: usize,
    candidate: [f64; 4],
    strikes: &[f64],
    prices: &[f64],
    model: &mut LiborModel,
    market: &Market,
    quad: &QuadratureConfig,
) -> f64 {
    let [b, k, e, r] = candidate;
    model.set_expiry(j, b, k, e, r);
    match caplet_prices(j, strikes, model, market, quad) {
        Ok(p) => {
            let v = mean_relative_error(&p, prices);
            if v.is_finite() {
                v
            } else {
                PENALTY
            }
        }
        Err(_) => PENALTY,
    }
}

fn to_box(u: &[f64; 4]) -> [f64; 4] {
    std::array::from_fn(|i| LOWER[i] + (UPPER[i] - LOWER[i]) / (1.0 + (-u[i]).exp()))
}

fn from_box(x: &[f64; 4]) -> [f64; 4] {
    std::array::from_fn(|i| {
        let t = ((x[i] - LOWER[i]) / (UPPER[i] - LOWER[i])).clamp(1e-12, 1.0 - 1e-12);
        (t / (1.0 - t)).ln()
    })
}

struct SimplexRun {
    best: [f64; 4],
    value: f64,
    evals: usize,
    converged: bool,
}

/// Nelder–Mead in unconstrained coordinates.
fn nelder_mead(f: &mut dyn FnMut(&[f64; 4]) -> f64, start: [f64; 4], opts: &CalibrationOptions) -> SimplexRun {
    const N: usize = 4;
    let mut pts: Vec<[f64; 4]> = vec![start];
    for i in 0..N {
        let mut p = start;
        p[i] += 0.5;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(&mut *f).collect();
    let mut evals = N + 1;
    let mut converged = false;
    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=N).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i]).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = vals[N] - vals[0];
        let diameter = pts[1..]
            .iter()
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol && diameter <= opts.x_tol || vals[0] <= opts.f_tol && spread <= opts.f_tol {
            converged = true;
            break;
        }

        let centroid: [f64; 4] = std::array::from_fn(|i| pts[..N].iter().map(|p| p[i]).sum::<f64>() / N as f64);
        let along = |t: f64| -> [f64; 4] { std::array::from_fn(|i| centroid[i] + t * (pts[N][i] - centroid[i])) };

        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                pts[N] = xe;
                vals[N] = fe;
            } else {
                pts[N] = xr;
                vals[N] = fr;
            }
            continue;
        }
        if fr < vals[N - 1] {
            pts[N] = xr;
            vals[N] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[N] {
            let xc = along(-0.5);
            (xc, f(&xc))
        } else {
            let xc = along(0.5);
            (xc, f(&xc))
        };
        evals += 1;
        if fc < vals[N].min(fr) {
            pts[N] = xc;
            vals[N] = fc;
            continue;
        }
        for i in 1..=N {
            pts[i] = std::array::from_fn(|d| pts[0][d] + 0.5 * (pts[i][d] - pts[0][d]));
            vals[i] = f(&pts[i]);
        }
        evals += N;
    }
    let best = (0..=N).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    SimplexRun {
        best: pts[best],
        value: vals[best],
        evals,
        converged,
    }
}

/// Fits expiry `j`; parameters of expiries `k > j` in `model` are held fixed.
/// On return `model` carries the fitted values at `j`. A warm start (usually
/// the fit of expiry `j + 1`) is tried first and kept unless a cold start
/// beats it by more than [`WARM_MARGIN`].
pub fn calibrate_maturity(
    panel: &CapletPanel,
    model: &mut LiborModel,
    market: &Market,
    warm_start: Option<[f64; 4]>,
    opts: &CalibrationOptions,
) -> Result<MaturityFit> {
    let j = panel.expiry;
    market.check_expiry(j)?;
    opts.quad.validate()?;
    let prices = panel_prices(panel, model, market)?;
    let strikes = panel.strikes.clone();
    let mut f = |u: &[f64; 4]| objective(j, to_box(u), &strikes, &prices, model, market, &opts.quad);

    let mut best: Option<SimplexRun> = None;
    let mut evaluations = 0;
    if let Some(w) = warm_start {
        let run = nelder_mead(&mut f, from_box(&w), opts);
        evaluations += run.evals;
        best = Some(run);
    }
    let margin = if warm_start.is_some() { WARM_MARGIN } else { 0.0 };
    for factor in [1.0, 0.5, 1.5] {
        let start: [f64; 4] = std::array::from_fn(|i| BASE_START[i] * factor);
        let run = nelder_mead(&mut f, from_box(&start), opts);
        evaluations += run.evals;
        if best.as_ref().is_none_or(|b| run.value < b.value - margin) {
            best = Some(run);
        }
    }
    let mut best = best.expect("three starts");
    for _ in 0..opts.restarts {
        let run = nelder_mead(&mut f, best.best, opts);
        evaluations += run.evals;
        let improved = run.value < best.value;
        if improved {
            best = run;
        } else {
            best.converged |= run.converged;
            break;
        }
    }
    let x = to_box(&best.best);
    let value = f(&best.best);
    let names = ["beta_norm", "kappa", "eps", "rho"];
    let at_bounds = (0..4)
        .filter(|&i| {
            let width = UPPER[i] - LOWER[i];
            (x[i] - LOWER[i]).abs() <= 1e-6 * width || (UPPER[i] - x[i]).abs() <= 1e-6 * width
        })
        .map(|i| names[i].to_string())
        .collect();
    Ok(MaturityFit {
        expiry: j,
        beta_norm: x[0],
        kappa: x[1],
        eps: x[2],
        rho: x[3],
        objective: value,
        evaluations,
        converged: best.converged,
        at_bounds,
    })
}

/// Calibrates every expiry with a panel, from `n - 1` down to 1.
pub fn calibrate_all(
    panels: &[CapletPanel],
    skeleton: &ModelParams,
    market: &Market,
    opts: &CalibrationOptions,
) -> Result<(CalibrationResult, Vec<FitRow>)> {
    let mut model = LiborModel::new(skeleton.clone(), &market.tenor)?;
    let m = market.num_libors();
    for p in panels {
        market.check_expiry(p.expiry)?;
        if panels.iter().filter(|q| q.expiry == p.expiry).count() > 1 {
            return Err(Error::Config(format!("more than one panel for expiry {}", p.expiry)));
        }
    }
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    for j in (1..=m).rev() {
        let Some(panel) = panels.iter().find(|p| p.expiry == j) else {
            skipped.push(j);
            continue;
        };
        let warm = fits.last().map(|f: &MaturityFit| [f.beta_norm, f.kappa, f.eps, f.rho]);
        let fit = calibrate_maturity(panel, &mut model, market, warm, opts)?;
        log::info!(
            "expiry {j}: objective {:.3e} after {} evaluations{}",
            fit.objective,
            fit.evaluations,
            if fit.converged { "" } else { " (not converged)" }
        );
        fits.push(fit);
    }
    if !skipped.is_empty() && !panels.is_empty() {
        log::warn!("no panel for expiries {skipped:?}; holding their initial parameters");
    }

    let mut report = Vec::new();
    let mut total = 0.0;
    let mut count = 0usize;
    for fit in &fits {
        let panel = panels.iter().find(|p| p.expiry == fit.expiry).expect("fitted panel");
        let j = fit.expiry;
        let market_prices = panel_prices(panel, &model, market)?;
        let model_prices = caplet_prices(j, &panel.strikes, &model, market, &opts.quad)?;
        let alpha = model.alpha(j);
        let forward = market.libor(j) + alpha;
        let scale = market.delta(j) * market.bond(j + 1);
        let horizon = market.date(j);
        let ivol = |price: f64, k: f64| {
            implied_vol(price, forward, k + alpha, horizon, scale)
                .ok()
                .map(|v| v.vol)
        };
        for ((&k, &mp), &pp) in panel.strikes.iter().zip(&market_prices).zip(&model_prices) {
            total += (pp - mp).abs() / mp;
            count += 1;
            report.push(FitRow {
                maturity: j,
                strike: k,
                market_price: mp,
                model_price: pp,
                market_ivol: ivol(mp, k),
                model_ivol: ivol(pp, k),
            });
        }
    }
    let params = model.params.clone();
    let result = CalibrationResult {
        fits,
        skipped,
        theta: params.theta.clone(),
        alpha: params.alpha.clone(),
        gamma: params.gamma.clone(),
        corr_decay: params.corr_decay,
        mean_relative_error: if count > 0 { total / count as f64 } else { 0.0 },
        params,
    };
    Ok((result, report))
}

/// Writes `maturity,strike,market_price,model_price,market_ivol,model_ivol`.
pub fn write_fit_report<W: Write>(out: W, rows: &[FitRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "maturity",
        "strike",
        "market_price",
        "model_price",
        "market_ivol",
        "model_ivol",
    ])
    .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        w.write_record([
            r.maturity.to_string(),
            r.strike.to_string(),
            r.market_price.to_string(),
            r.model_price.to_string(),
            opt(r.market_ivol),
            opt(r.model_ivol),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Caplet price panels generated by `model` itself on a common strike grid.
pub fn synthetic_panels(
    strikes: &[f64],
    expiries: impl IntoIterator<Item = usize>,
    model: &LiborModel,
    market: &Market,
    quad: &QuadratureConfig,
) -> Result<Vec<CapletPanel>> {
    expiries
        .into_iter()
        .map(|j| {
            let prices = caplet_prices(j, strikes, model, market, quad)?;
            CapletPanel::new(j, strikes.to_vec(), prices, QuoteKind::Price)
        })
        .collect()
}
