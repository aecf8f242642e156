//! Model parameterization: per-expiry square-root volatility parameters,
//! displacements, Libor factor loadings from an exponentially decaying
//! correlation, and instantaneous-correlation diagnostics.
//!
//! Per-expiry vectors are stored 0-based (`kappa[j - 1]` belongs to `L_j`);
//! the accessor methods take the expiry index `j` directly.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::TenorStructure;

/// Diagonal shift tried once when the plain Cholesky factorization fails.
pub const CHOLESKY_JITTER: f64 = 1e-12;

/// Per-expiry parameters of the volatility and Libor dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Displacements `alpha_j`.
    pub alpha: Vec<f64>,
    /// Loading norms `|beta_j|`.
    pub beta_norm: Vec<f64>,
    /// Libor/volatility correlations `rho_j`.
    pub rho: Vec<f64>,
    /// Mean-reversion speeds `kappa_j`.
    pub kappa: Vec<f64>,
    /// Mean-reversion levels `theta_j`, also the initial values `v_j(0)`.
    pub theta: Vec<f64>,
    /// Vol-of-vol `eps_j`.
    pub eps: Vec<f64>,
    /// Gaussian loadings `gamma_j`, one row per expiry; empty when absent.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gamma: Vec<Vec<f64>>,
    /// Decay `a` of the Libor correlation `r_ij = exp(-a |T_i - T_j|)`.
    pub corr_decay: f64,
}

impl ModelParams {
    pub fn num_libors(&self) -> usize {
        self.kappa.len()
    }

    /// Dimension of the Gaussian factor (0 when `gamma` is absent).
    pub fn gaussian_dim(&self) -> usize {
        self.gamma.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.kappa.len();
        let lens: [(&'static str, usize); 5] = [
            ("alpha", self.alpha.len()),
            ("beta_norm", self.beta_norm.len()),
            ("rho", self.rho.len()),
            ("theta", self.theta.len()),
            ("eps", self.eps.len()),
        ];
        for (field, len) in lens {
            if len != m {
                return Err(Error::Invariant {
                    field,
                    reason: format!("length {len} differs from kappa length {m}"),
                });
            }
        }
        if m == 0 {
            return Err(Error::Invariant {
                field: "kappa",
                reason: "no expiries".into(),
            });
        }
        if !self.gamma.is_empty() {
            if self.gamma.len() != m {
                return Err(Error::Invariant {
                    field: "gamma",
                    reason: format!("{} rows, expected {m}", self.gamma.len()),
                });
            }
            let dim = self.gamma[0].len();
            if self
                .gamma
                .iter()
                .any(|g| g.len() != dim || g.iter().any(|x| !x.is_finite()))
            {
                return Err(Error::Invariant {
                    field: "gamma",
                    reason: "rows must have equal length and finite entries".into(),
                });
            }
        }
        let check = |field: &'static str, v: &[f64], ok: fn(f64) -> bool, what: &str| -> Result<()> {
            match v.iter().position(|&x| !ok(x)) {
                Some(i) => Err(Error::Invariant {
                    field,
                    reason: format!("entry {} = {} must be {what}", i + 1, v[i]),
                }),
                None => Ok(()),
            }
        };
        check("kappa", &self.kappa, |x| x > 0.0 && x.is_finite(), "positive")?;
        check("theta", &self.theta, |x| x > 0.0 && x.is_finite(), "positive")?;
        check("eps", &self.eps, |x| x >= 0.0 && x.is_finite(), "non-negative")?;
        check("rho", &self.rho, |x| (-1.0..=1.0).contains(&x), "in [-1, 1]")?;
        check(
            "beta_norm",
            &self.beta_norm,
            |x| x >= 0.0 && x.is_finite(),
            "non-negative",
        )?;
        check("alpha", &self.alpha, f64::is_finite, "finite")?;
        if !(self.corr_decay >= 0.0 && self.corr_decay.is_finite()) {
            return Err(Error::Invariant {
                field: "corr_decay",
                reason: format!("{} must be non-negative", self.corr_decay),
            });
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let params: ModelParams = serde_json::from_str(s)?;
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Json(inner) => Error::Parse {
                path: path.to_path_buf(),
                line: inner.line(),
                reason: inner.to_string(),
            },
            other => other,
        })
    }

    pub fn gamma_sq(&self, j: usize) -> f64 {
        self.gamma.get(j - 1).map_or(0.0, |g| g.iter().map(|x| x * x).sum())
    }

    pub fn gamma_dot(&self, j: usize, k: usize) -> f64 {
        match (self.gamma.get(j - 1), self.gamma.get(k - 1)) {
            (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            _ => 0.0,
        }
    }
}

/// Unit loading vectors `e_j` (rows of the Cholesky factor of `r`) together
/// with the correlation matrix they reproduce.
#[derive(Debug, Clone, PartialEq)]
pub struct Loadings {
    /// Row `j - 1` is `e_j`; lower triangular.
    pub rows: Vec<Vec<f64>>,
    /// `r_{ij}` as used for the factorization.
    pub corr: Vec<Vec<f64>>,
}

impl Loadings {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn e(&self, j: usize) -> &[f64] {
        &self.rows[j - 1]
    }

    /// `r_{jk} = e_j^T e_k` for expiry indices `j, k`.
    pub fn r(&self, j: usize, k: usize) -> f64 {
        self.corr[j - 1][k - 1]
    }

    /// Largest deviation of the Gram matrix `E E^T` from `r`.
    pub fn gram_error(&self) -> f64 {
        let m = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let dot: f64 = self.rows[i].iter().zip(&self.rows[j]).map(|(a, b)| a * b).sum();
                worst = worst.max((dot - self.corr[i][j]).abs());
            }
        }
        worst
    }
}

/// Loadings for the Libors `L_1..L_{n-1}` with `r_ij = exp(-decay |T_i - T_j|)`
/// and `m = n - 1` factors.
pub fn build_loadings(tenor: &TenorStructure, decay: f64) -> Result<Loadings> {
    let m = tenor.n() - 1;
    build_loadings_dim(tenor, decay, m)
}

/// As [`build_loadings`] with an explicit factor dimension `dim >= n - 1`;
/// extra coordinates are zero.
pub fn build_loadings_dim(tenor: &TenorStructure, decay: f64, dim: usize) -> Result<Loadings> {
    let m = tenor.n() - 1;
    if dim < m {
        return Err(Error::Config(format!(
            "factor dimension {dim} below the number of Libors {m} required by a full-rank Cholesky factor"
        )));
    }
    if m > 1 && !(decay > 0.0) {
        // all Libors perfectly correlated: singular matrix
        return Err(Error::NotPositiveDefinite);
    }
    let corr: Vec<Vec<f64>> = (1..=m)
        .map(|i| {
            (1..=m)
                .map(|j| (-decay * (tenor.date(i) - tenor.date(j)).abs()).exp())
                .collect()
        })
        .collect();
    let matrix = DMatrix::from_fn(m, m, |i, j| corr[i][j]);
    let factor = match matrix.clone().cholesky() {
        Some(c) => c.l(),
        None => {
            let jittered = matrix + DMatrix::identity(m, m) * CHOLESKY_JITTER;
            jittered.cholesky().ok_or(Error::NotPositiveDefinite)?.l()
        }
    };
    let rows = (0..m)
        .map(|i| {
            let mut row: Vec<f64> = (0..m).map(|j| factor[(i, j)]).collect();
            row.resize(dim, 0.0);
            row
        })
        .collect();
    Ok(Loadings { rows, corr })
}

/// Volatility loadings `sigma_j = rho_j eps_j e_j` and the scalar orthogonal
/// part `sigma_bar_j = sqrt(1 - rho_j^2) eps_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolFactorization {
    pub sigma: Vec<Vec<f64>>,
    pub sigma_bar: Vec<f64>,
}

pub fn factorize_vols(params: &ModelParams, loadings: &Loadings) -> VolFactorization {
    let (sigma, sigma_bar) = (0..params.num_libors())
        .map(|i| {
            let scale = params.rho[i] * params.eps[i];
            let sigma: Vec<f64> = loadings.rows[i].iter().map(|e| scale * e).collect();
            let sigma_bar = (1.0 - params.rho[i] * params.rho[i]).max(0.0).sqrt() * params.eps[i];
            (sigma, sigma_bar)
        })
        .unzip();
    VolFactorization { sigma, sigma_bar }
}

/// A fully assembled model: parameters, Libor loadings and vol loadings.
#[derive(Debug, Clone, PartialEq)]
pub struct LiborModel {
    pub params: ModelParams,
    pub loadings: Loadings,
    pub vols: VolFactorization,
}

impl LiborModel {
    pub fn new(params: ModelParams, tenor: &TenorStructure) -> Result<Self> {
        params.validate()?;
        if params.num_libors() != tenor.n() - 1 {
            return Err(Error::Config(format!(
                "model has {} expiries but the tenor carries {} Libors",
                params.num_libors(),
                tenor.n() - 1
            )));
        }
        let loadings = build_loadings(tenor, params.corr_decay)?;
        let vols = factorize_vols(&params, &loadings);
        Ok(Self { params, loadings, vols })
    }

    pub fn num_libors(&self) -> usize {
        self.params.num_libors()
    }

    pub fn alpha(&self, j: usize) -> f64 {
        self.params.alpha[j - 1]
    }
    pub fn beta_norm(&self, j: usize) -> f64 {
        self.params.beta_norm[j - 1]
    }
    pub fn rho(&self, j: usize) -> f64 {
        self.params.rho[j - 1]
    }
    pub fn kappa(&self, j: usize) -> f64 {
        self.params.kappa[j - 1]
    }
    pub fn theta(&self, j: usize) -> f64 {
        self.params.theta[j - 1]
    }
    pub fn eps(&self, j: usize) -> f64 {
        self.params.eps[j - 1]
    }
    pub fn sigma(&self, j: usize) -> &[f64] {
        &self.vols.sigma[j - 1]
    }
    pub fn sigma_bar(&self, j: usize) -> f64 {
        self.vols.sigma_bar[j - 1]
    }

    /// `beta_j^T beta_k = |beta_j| |beta_k| r_jk`.
    pub fn beta_dot(&self, j: usize, k: usize) -> f64 {
        self.beta_norm(j) * self.beta_norm(k) * self.loadings.r(j, k)
    }

    /// `sigma_j^T beta_k = rho_j eps_j |beta_k| r_jk`.
    pub fn sigma_dot_beta(&self, j: usize, k: usize) -> f64 {
        self.rho(j) * self.eps(j) * self.beta_norm(k) * self.loadings.r(j, k)
    }

    /// `beta_j` as a vector in the Libor factor space.
    pub fn beta(&self, j: usize) -> Vec<f64> {
        let b = self.beta_norm(j);
        self.loadings.e(j).iter().map(|e| b * e).collect()
    }

    /// Replaces the calibrated per-expiry parameters of `L_j` and refreshes
    /// its volatility loadings.
    pub fn set_expiry(&mut self, j: usize, beta_norm: f64, kappa: f64, eps: f64, rho: f64) {
        let i = j - 1;
        self.params.beta_norm[i] = beta_norm;
        self.params.kappa[i] = kappa;
        self.params.eps[i] = eps;
        self.params.rho[i] = rho;
        let scale = rho * eps;
        self.vols.sigma[i] = self.loadings.rows[i].iter().map(|e| scale * e).collect();
        self.vols.sigma_bar[i] = (1.0 - rho * rho).max(0.0).sqrt() * eps;
    }
}

/// Instantaneous correlations at volatility state `(v_j, v_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InstantaneousCorrelations {
    /// `Cor(dL_j/L_j, dL_k/L_k)`.
    pub libor_libor: f64,
    /// `Cor(dL_j/L_j, dv_k)`.
    pub libor_vol: f64,
    /// `Cor(dv_j, dv_k)`.
    pub vol_vol: f64,
}

pub fn instantaneous_correlations(
    model: &LiborModel,
    j: usize,
    k: usize,
    v_j: f64,
    v_k: f64,
) -> Result<InstantaneousCorrelations> {
    let m = model.num_libors();
    if j == 0 || k == 0 || j > m || k > m {
        return Err(Error::Index(format!("expiry indices ({j}, {k}) outside [1, {m}]")));
    }
    if v_j < 0.0 || v_k < 0.0 {
        return Err(Error::Config(format!(
            "volatility states must be non-negative, got ({v_j}, {v_k})"
        )));
    }
    let p = &model.params;
    let libor_var_j = p.gamma_sq(j) + v_j * model.beta_norm(j).powi(2);
    let libor_var_k = p.gamma_sq(k) + v_k * model.beta_norm(k).powi(2);
    if libor_var_j <= 0.0 {
        return Err(Error::UndefinedCorrelation(format!("L_{j}"), format!("L_{k}")));
    }
    if libor_var_k <= 0.0 {
        return Err(Error::UndefinedCorrelation(format!("L_{k}"), format!("L_{j}")));
    }
    if model.eps(k) == 0.0 || model.eps(j) == 0.0 {
        return Err(Error::UndefinedCorrelation(format!("v_{j}"), format!("v_{k}")));
    }
    let libor_libor =
        (p.gamma_dot(j, k) + (v_j * v_k).sqrt() * model.beta_dot(j, k)) / (libor_var_j.sqrt() * libor_var_k.sqrt());
    let beta_j_sigma_k = model.beta_norm(j) * model.rho(k) * model.eps(k) * model.loadings.r(j, k);
    let libor_vol = v_j.sqrt() * beta_j_sigma_k / (libor_var_j.sqrt() * model.eps(k));
    let vol_vol = model.rho(j) * model.rho(k) * model.loadings.r(j, k)
        + (1.0 - model.rho(j).powi(2)).max(0.0).sqrt() * (1.0 - model.rho(k).powi(2)).max(0.0).sqrt();
    Ok(InstantaneousCorrelations {
        libor_libor,
        libor_vol,
        vol_vol,
    })
}
