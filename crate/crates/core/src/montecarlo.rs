//! Terminal-measure Monte Carlo of the full model and of the substituted
//! single-volatility models.
//!
//! Log-Euler on `X_j = ln(L_j + alpha_j)` with the exact drift at the left
//! endpoint; full-truncation Euler for the variance processes. Each path owns
//! a ChaCha8 stream keyed by `(seed, path)`, and paths are reduced in fixed
//! blocks so results do not depend on the rayon thread count.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affine::swap_averaged_vol_params;
use crate::error::{Error, Result};
use crate::market_data::{swap_context, Market};
use crate::model::LiborModel;

const BLOCK: usize = 512;

/// Which variance processes drive the Libors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum Substitution {
    /// Every Libor keeps its own `v_j`.
    #[default]
    None,
    /// Every `v_k` is replaced by `v_j`.
    Caplet { j: usize },
    /// `v_j` for `p <= j < q` is replaced by the averaged `v^{p,q}`.
    Swap { p: usize, q: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
    pub substitution: Substitution,
    pub antithetic: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            paths: 30_000,
            steps_per_year: 8,
            seed: 20_100_920,
            substitution: Substitution::None,
            antithetic: false,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::Config("path count must be at least 1".into()));
        }
        if self.steps_per_year == 0 {
            return Err(Error::Config("steps per year must be at least 1".into()));
        }
        if self.antithetic && self.paths % 2 == 1 {
            return Err(Error::Config("antithetic sampling needs an even path count".into()));
        }
        Ok(())
    }

    pub fn with_substitution(self, substitution: Substitution) -> Self {
        McConfig { substitution, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McResult {
    pub price: f64,
    pub se: f64,
    pub paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
    #[serde(skip)]
    pub elapsed_secs: f64,
}

/// One square-root variance process.
#[derive(Debug, Clone)]
struct VolProcess {
    kappa: f64,
    theta: f64,
    v0: f64,
    sigma: Vec<f64>,
    sigma_bar: f64,
}

/// Precomputed simulation layout.
struct Engine<'a> {
    model: &'a LiborModel,
    market: &'a Market,
    /// Lowest simulated Libor index; lower ones stay at their initial value.
    first: usize,
    /// Tenor index of the last observation date.
    last: usize,
    procs: Vec<VolProcess>,
    /// Variance process driving Libor `k`, stored at `k`.
    proc_of: Vec<usize>,
    /// Steps in each tenor period `i = 0..last`.
    steps: Vec<usize>,
    dim: usize,
    gdim: usize,
}

/// Libor and variance values at the tenor dates `T_0 .. T_last` of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSnapshot {
    /// `libors[i][k]` is `L_k(T_i)` for `k = 1..n-1`; index 0 is unused.
    pub libors: Vec<Vec<f64>>,
    /// `vols[i][r]` is the `r`-th simulated variance process at `T_i`, before
    /// truncation (it may dip below zero).
    pub vols: Vec<Vec<f64>>,
}

impl<'a> Engine<'a> {
    fn new(model: &'a LiborModel, market: &'a Market, first: usize, last: usize, cfg: &McConfig) -> Result<Self> {
        cfg.validate()?;
        let m = market.num_libors();
        if last == 0 || last > m {
            return Err(Error::Index(format!("observation tenor index {last} outside 1..={m}")));
        }
        let original = |j: usize| VolProcess {
            kappa: model.kappa(j),
            theta: model.theta(j),
            v0: model.theta(j),
            sigma: model.sigma(j).to_vec(),
            sigma_bar: model.sigma_bar(j),
        };
        let (procs, proc_of) = match cfg.substitution {
            Substitution::None => {
                let procs: Vec<VolProcess> = (1..=m).map(original).collect();
                (procs, (0..=m).map(|k| k.saturating_sub(1)).collect())
            }
            Substitution::Caplet { j } => {
                market.check_expiry(j)?;
                (vec![original(j)], vec![0; m + 1])
            }
            Substitution::Swap { p, q } => {
                let ctx = swap_context(p, q, market)?;
                let avg = swap_averaged_vol_params(&ctx, model);
                let mut procs: Vec<VolProcess> = (1..=m).map(original).collect();
                procs.push(VolProcess {
                    kappa: avg.kappa,
                    theta: avg.theta,
                    v0: avg.theta,
                    sigma: avg.sigma,
                    sigma_bar: avg.sigma_bar,
                });
                let proc_of = (0..=m)
                    .map(|k| if (p..q).contains(&k) { m } else { k.saturating_sub(1) })
                    .collect();
                (procs, proc_of)
            }
        };
        let steps = (0..last)
            .map(|i| ((market.delta(i) * cfg.steps_per_year as f64) - 1e-9).ceil().max(1.0) as usize)
            .collect();
        Ok(Engine {
            model,
            market,
            first: first.max(1),
            last,
            procs,
            proc_of,
            steps,
            dim: model.loadings.dim(),
            gdim: model.params.gaussian_dim(),
        })
    }

    /// Simulates one path, returning snapshots at `T_0..T_last`.
    fn path(&self, rng: &mut ChaCha8Rng, sign: f64, path: usize, normals: &mut Vec<f64>) -> Result<PathSnapshot> {
        let m = self.market.num_libors();
        let model = self.model;
        let market = self.market;
        let mut x: Vec<f64> = (0..=m)
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    (market.libor(k) + model.alpha(k)).ln()
                }
            })
            .collect();
        let mut libor: Vec<f64> = (0..=m).map(|k| if k == 0 { 0.0 } else { market.libor(k) }).collect();
        let mut v: Vec<f64> = self.procs.iter().map(|p| p.v0).collect();
        let mut snap = PathSnapshot {
            libors: vec![libor.clone()],
            vols: vec![v.clone()],
        };

        let nfac = self.dim + self.gdim + 1;
        normals.resize(nfac, 0.0);
        let mut sqrt_v = vec![0.0; v.len()];
        let mut f = vec![0.0; m + 1];
        let mut acc = vec![0.0; self.dim];
        let mut gacc = vec![0.0; self.gdim];
        let mut drift = vec![0.0; m + 1];
        let mut step_no = 0;
        for i in 0..self.last {
            let h = market.delta(i) / self.steps[i] as f64;
            let sqrt_h = h.sqrt();
            let lo = (i + 1).max(self.first);
            for _ in 0..self.steps[i] {
                for z in normals.iter_mut() {
                    let draw: f64 = StandardNormal.sample(rng);
                    *z = sign * draw * sqrt_h;
                }
                let (dw, rest) = normals.split_at(self.dim);
                let (dwg, dwbar) = rest.split_at(self.gdim);
                let dwbar = dwbar[0];

                for (r, val) in v.iter().enumerate() {
                    sqrt_v[r] = val.max(0.0).sqrt();
                }
                for k in lo..=m {
                    let delta = market.delta(k);
                    f[k] = delta * (libor[k] + model.alpha(k)) / (1.0 + delta * libor[k]);
                }
                acc.iter_mut().for_each(|a| *a = 0.0);
                gacc.iter_mut().for_each(|a| *a = 0.0);
                for k in (lo..=m).rev() {
                    let e = model.loadings.e(k);
                    let bn = model.beta_norm(k);
                    let sv = sqrt_v[self.proc_of[k]];
                    let cross: f64 = e[..k].iter().zip(&acc[..k]).map(|(a, b)| a * b).sum();
                    let mut d = -0.5 * sv * sv * bn * bn - sv * bn * cross;
                    if self.gdim > 0 {
                        let g = &model.params.gamma[k - 1];
                        let gg: f64 = g.iter().map(|a| a * a).sum();
                        let gc: f64 = g.iter().zip(&gacc).map(|(a, b)| a * b).sum();
                        d += -0.5 * gg - gc;
                        for (a, gv) in gacc.iter_mut().zip(g) {
                            *a += f[k] * gv;
                        }
                    }
                    drift[k] = d;
                    let w = f[k] * sv * bn;
                    for (a, ev) in acc[..k].iter_mut().zip(&e[..k]) {
                        *a += w * ev;
                    }
                }
                for k in lo..=m {
                    let e = model.loadings.e(k);
                    let sv = sqrt_v[self.proc_of[k]];
                    let mut diffusion =
                        sv * model.beta_norm(k) * e[..k].iter().zip(dw).map(|(a, b)| a * b).sum::<f64>();
                    if self.gdim > 0 {
                        diffusion += model.params.gamma[k - 1]
                            .iter()
                            .zip(dwg)
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    }
                    x[k] += drift[k] * h + diffusion;
                    libor[k] = x[k].exp() - model.alpha(k);
                }
                for (r, p) in self.procs.iter().enumerate() {
                    let vp = v[r].max(0.0);
                    let noise: f64 = p.sigma.iter().zip(dw).map(|(a, b)| a * b).sum::<f64>() + p.sigma_bar * dwbar;
                    v[r] += p.kappa * (p.theta - vp) * h + sqrt_v[r] * noise;
                }
                step_no += 1;
            }
            if let Some(k) = (lo..=m).find(|&k| !libor[k].is_finite()) {
                return Err(Error::Simulation {
                    path,
                    step: step_no,
                    time: market.date(i + 1),
                    what: format!("L_{k} = {}", libor[k]),
                });
            }
            if let Some(r) = (0..v.len()).find(|&r| !v[r].is_finite()) {
                return Err(Error::Simulation {
                    path,
                    step: step_no,
                    time: market.date(i + 1),
                    what: format!("variance process {r} = {}", v[r]),
                });
            }
            snap.libors.push(libor.clone());
            snap.vols.push(v.clone());
        }
        Ok(snap)
    }

    /// Runs all paths, feeding each snapshot to `payoff` which writes one
    /// sample per output. Returns mean and standard error per output.
    fn run<P>(&self, cfg: &McConfig, outputs: usize, payoff: P) -> Result<Vec<(f64, f64)>>
    where
        P: Fn(&PathSnapshot, &mut [f64]) + Sync,
    {
        // With antithetics a sample is the average over a mirrored pair.
        let samples = if cfg.antithetic { cfg.paths / 2 } else { cfg.paths };
        let blocks = samples.div_ceil(BLOCK);
        let partial: Vec<Vec<Welford>> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut stats = vec![Welford::default(); outputs];
                let mut out = vec![0.0; outputs];
                let mut mirror = vec![0.0; outputs];
                let mut normals = Vec::new();
                for s in b * BLOCK..((b + 1) * BLOCK).min(samples) {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(s as u64);
                    let snap = self.path(&mut rng, 1.0, s, &mut normals)?;
                    payoff(&snap, &mut out);
                    if cfg.antithetic {
                        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                        rng.set_stream(s as u64);
                        let snap = self.path(&mut rng, -1.0, s, &mut normals)?;
                        payoff(&snap, &mut mirror);
                        for (o, m) in out.iter_mut().zip(&mirror) {
                            *o = 0.5 * (*o + m);
                        }
                    }
                    for (st, &o) in stats.iter_mut().zip(&out) {
                        st.push(o);
                    }
                }
                Ok(stats)
            })
            .collect::<Result<_>>()?;
        let mut total = vec![Welford::default(); outputs];
        for block in &partial {
            for (t, b) in total.iter_mut().zip(block) {
                t.merge(b);
            }
        }
        Ok(total.iter().map(|w| (w.mean, w.std_error())).collect())
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: &Welford) {
        if o.n == 0.0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n / n;
        self.m2 += o.m2 + d * d * self.n * o.n / n;
        self.n = n;
    }

    fn std_error(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

fn results(stats: Vec<(f64, f64)>, scale: f64, cfg: &McConfig, start: Instant) -> Vec<McResult> {
    let elapsed_secs = start.elapsed().as_secs_f64();
    stats
        .into_iter()
        .map(|(mean, se)| McResult {
            price: scale * mean,
            se: scale * se,
            paths: cfg.paths,
            steps_per_year: cfg.steps_per_year,
            seed: cfg.seed,
            elapsed_secs,
        })
        .collect()
}

/// `prod_{k=r}^{n-1} (1 + delta_k L_k)`, i.e. `B_r / B_n` from the Libors.
fn bond_ratio(libors: &[f64], market: &Market, r: usize) -> f64 {
    (r..=market.num_libors())
        .map(|k| 1.0 + market.delta(k) * libors[k])
        .product()
}

/// Simulates the ensemble up to the tenor date `horizon`, keeping tenor-date snapshots.
pub fn simulate(model: &LiborModel, market: &Market, horizon: f64, cfg: &McConfig) -> Result<Vec<PathSnapshot>> {
    let last = market
        .tenor
        .index_of(horizon)
        .filter(|&i| i >= 1 && i < market.n())
        .ok_or_else(|| Error::Config(format!("horizon {horizon} is not a tenor date in (T_0, T_{{n-1}}]")))?;
    let engine = Engine::new(model, market, 1, last, cfg)?;
    (0..cfg.paths)
        .into_par_iter()
        .map_init(Vec::new, |buf, s| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(s as u64);
            engine.path(&mut rng, 1.0, s, buf)
        })
        .collect()
}

pub fn mc_caplet(j: usize, strike: f64, model: &LiborModel, market: &Market, cfg: &McConfig) -> Result<McResult> {
    Ok(mc_caplets(j, &[strike], model, market, cfg)?[0])
}

/// Caplets on `L_j` for several strikes priced on one set of paths.
pub fn mc_caplets(
    j: usize,
    strikes: &[f64],
    model: &LiborModel,
    market: &Market,
    cfg: &McConfig,
) -> Result<Vec<McResult>> {
    market.check_expiry(j)?;
    let start = Instant::now();
    let m = market.num_libors();
    let last = (j + 1).min(m);
    let engine = Engine::new(model, market, j, last, cfg)?;
    let delta = market.delta(j);
    let stats = engine.run(cfg, strikes.len(), |snap, out| {
        let fixing = snap.libors[j][j];
        let deflator = if j < m {
            bond_ratio(&snap.libors[j + 1], market, j + 1)
        } else {
            1.0
        };
        for (o, &k) in out.iter_mut().zip(strikes) {
            *o = delta * (fixing - k).max(0.0) * deflator;
        }
    })?;
    Ok(results(stats, market.bond(market.n()), cfg, start))
}

pub fn mc_swaption(
    p: usize,
    q: usize,
    strike: f64,
    model: &LiborModel,
    market: &Market,
    cfg: &McConfig,
) -> Result<McResult> {
    Ok(mc_swaptions(p, q, &[strike], model, market, cfg)?[0])
}

/// Payer swaptions on `[T_p, T_q]` for several strikes priced on one set of paths.
pub fn mc_swaptions(
    p: usize,
    q: usize,
    strikes: &[f64],
    model: &LiborModel,
    market: &Market,
    cfg: &McConfig,
) -> Result<Vec<McResult>> {
    market.check_swap(p, q)?;
    if p >= market.n() {
        return Err(Error::Index(format!("swaption expiry index {p} has no Libor to fix")));
    }
    let start = Instant::now();
    let engine = Engine::new(model, market, p, p, cfg)?;
    let stats = engine.run(cfg, strikes.len(), |snap, out| {
        let l = &snap.libors[p];
        // bond ratios b_r = B_r(T_p) / B_n(T_p) for r = p..q
        let mut b = vec![0.0; q - p + 1];
        b[q - p] = bond_ratio(l, market, q);
        for r in (p..q).rev() {
            b[r - p] = b[r + 1 - p] * (1.0 + market.delta(r) * l[r]);
        }
        let annuity: f64 = (p..q).map(|r| market.delta(r) * b[r + 1 - p]).sum();
        let float = b[0] - b[q - p];
        for (o, &k) in out.iter_mut().zip(strikes) {
            *o = (float - k * annuity).max(0.0);
        }
    })?;
    Ok(results(stats, market.bond(market.n()), cfg, start))
}

/// Means of the deflated bonds `B_j(T_i) / B_n(T_i)` for `j = i..n`, to be
/// compared with `B_j(0) / B_n(0)`.
pub fn deflated_bonds(i: usize, model: &LiborModel, market: &Market, cfg: &McConfig) -> Result<Vec<McResult>> {
    let n = market.n();
    if i == 0 || i >= n {
        return Err(Error::Index(format!("tenor index {i} outside 1..{n}")));
    }
    let start = Instant::now();
    let engine = Engine::new(model, market, i, i, cfg)?;
    let stats = engine.run(cfg, n - i + 1, |snap, out| {
        for (o, j) in out.iter_mut().zip(i..=n) {
            *o = bond_ratio(&snap.libors[i], market, j);
        }
    })?;
    Ok(results(stats, 1.0, cfg, start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{table_market, table_params, table_tenor};

    fn small_cfg(paths: usize) -> McConfig {
        McConfig {
            paths,
            ..Default::default()
        }
    }

    #[test]
    fn zero_loadings_freeze_libors() {
        let mut params = table_params(0.073);
        params.beta_norm = vec![0.0; 19];
        let model = LiborModel::new(params, &table_tenor()).unwrap();
        let market = table_market();
        let snaps = simulate(&model, &market, 10.0, &small_cfg(20)).unwrap();
        for s in &snaps {
            for row in &s.libors {
                for (k, l) in row.iter().enumerate().skip(1) {
                    assert!((l - market.libor(k)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn zero_vol_of_vol_keeps_level() {
        let mut params = table_params(0.073);
        params.eps = vec![0.0; 19];
        let model = LiborModel::new(params, &table_tenor()).unwrap();
        let snaps = simulate(&model, &table_market(), 5.0, &small_cfg(10)).unwrap();
        for s in &snaps {
            for row in &s.vols {
                assert!(row.iter().all(|&v| v == 1.0));
            }
        }
    }

    #[test]
    fn huge_strike_is_worthless() {
        let model = LiborModel::new(table_params(0.073), &table_tenor()).unwrap();
        let r = mc_caplet(5, 0.5, &model, &table_market(), &small_cfg(2000)).unwrap();
        assert!(r.price <= 3.0 * r.se + 1e-12);
    }

    #[test]
    fn zero_strike_swaption_parity() {
        let model = LiborModel::new(table_params(0.0553), &table_tenor()).unwrap();
        let market = table_market();
        let r = mc_swaption(2, 10, 0.0, &model, &market, &small_cfg(4000)).unwrap();
        let parity = market.bond(2) - market.bond(10);
        assert!(
            (r.price - parity).abs() <= 3.0 * r.se,
            "{} vs {parity} (se {})",
            r.price,
            r.se
        );
    }

    #[test]
    fn deflated_bonds_are_martingales() {
        let model = LiborModel::new(table_params(0.073), &table_tenor()).unwrap();
        let market = table_market();
        let res = deflated_bonds(5, &model, &market, &small_cfg(4000)).unwrap();
        let bn = market.bond(20);
        for (r, j) in res.iter().zip(5..=20) {
            let target = market.bond(j) / bn;
            assert!(
                (r.price - target).abs() <= 3.0 * r.se + 1e-12,
                "j={j}: {} vs {target}",
                r.price
            );
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let model = LiborModel::new(table_params(0.073), &table_tenor()).unwrap();
        let market = table_market();
        let cfg = small_cfg(1500);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mc_caplets(5, &[0.01, 0.02], &model, &market, &cfg).unwrap())
        };
        let a = run(1);
        let b = run(4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.price.to_bits(), y.price.to_bits());
            assert_eq!(x.se.to_bits(), y.se.to_bits());
        }
    }

    #[test]
    fn antithetic_pairs_run() {
        let model = LiborModel::new(table_params(0.073), &table_tenor()).unwrap();
        let cfg = McConfig {
            antithetic: true,
            ..small_cfg(1000)
        };
        let r = mc_caplet(3, 0.02, &model, &table_market(), &cfg).unwrap();
        assert!(r.price > 0.0 && r.se > 0.0);
        assert!(McConfig {
            antithetic: true,
            ..small_cfg(7)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn substitution_indices_are_checked() {
        let model = LiborModel::new(table_params(0.073), &table_tenor()).unwrap();
        let market = table_market();
        let cfg = small_cfg(10).with_substitution(Substitution::Caplet { j: 25 });
        assert!(mc_caplet(5, 0.01, &model, &market, &cfg).is_err());
        let cfg = small_cfg(10).with_substitution(Substitution::Swap { p: 10, q: 4 });
        assert!(mc_swaption(2, 10, 0.01, &model, &market, &cfg).is_err());
    }

    #[test]
    fn welford_merge_matches_direct() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut all = Welford::default();
        xs.iter().for_each(|&x| all.push(x));
        let (mut a, mut b) = (Welford::default(), Welford::default());
        xs[..37].iter().for_each(|&x| a.push(x));
        xs[37..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.mean - all.mean).abs() < 1e-15);
        assert!((a.m2 - all.m2).abs() < 1e-12);
    }
}
