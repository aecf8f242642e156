//! Pricing and calibration for a displaced Libor market model in which each
//! forward Libor carries its own square-root stochastic volatility.
//!
//! * [`market_data`]: tenor, discount curve, Libor stripping, swap quantities.
//! * [`model`]: parameters, factor loadings, correlation diagnostics.
//! * [`affine`]: frozen-drift effective parameters for caplets and swaptions.
//! * [`charfn`]: Heston-type characteristic functions.
//! * [`fourier`]: Black-76, Carr-Madan inversion with a Black control variate.
//! * [`montecarlo`]: terminal-measure simulation of the full and substituted models.
//! * [`calibrate`]: per-maturity fits to caplet price panels.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affine;
pub mod calibrate;
pub mod charfn;
pub mod error;
pub mod fixtures;
pub mod fourier;
pub mod market_data;
pub mod model;
pub mod montecarlo;

pub use error::{Error, Result};
pub use market_data::{CapletPanel, DiscountCurve, Market, QuoteKind, SwapContext, TenorStructure};
pub use model::{LiborModel, ModelParams};
pub use num_complex::Complex64;
