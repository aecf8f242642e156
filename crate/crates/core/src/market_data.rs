//! Tenor structures, discount curves, caplet quote panels and the swap
//! quantities (annuity, frozen weights, swap rate) derived from them.
//!
//! Indexing follows the tenor: `dates[i] = T_i` for `i = 0..=n` and
//! `bonds[i] = B_i(0)` with `B_0(0) = 1`. Forward Libors `L_j` exist for
//! `j = 1..n-1`; vectors of Libors are stored 0-based (`libors[j - 1]`).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tenor dates `0 = T_0 < T_1 < ... < T_n` in years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TenorStructure {
    dates: Vec<f64>,
}

impl TenorStructure {
    pub fn new(dates: Vec<f64>) -> Result<Self> {
        if dates.len() < 3 {
            return Err(Error::Invariant {
                field: "dates",
                reason: format!("need at least T_0, T_1, T_2 (n >= 2), got {} dates", dates.len()),
            });
        }
        if dates[0] != 0.0 {
            return Err(Error::Invariant {
                field: "dates",
                reason: format!("T_0 must be 0, got {}", dates[0]),
            });
        }
        for (i, w) in dates.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::Invariant {
                    field: "dates",
                    reason: format!(
                        "dates must be strictly increasing: T_{} = {} , T_{} = {}",
                        i,
                        w[0],
                        i + 1,
                        w[1]
                    ),
                });
            }
        }
        Ok(Self { dates })
    }

    /// Equally spaced tenor `T_i = i * delta`, `i = 0..=n`.
    pub fn uniform(n: usize, delta: f64) -> Result<Self> {
        Self::new((0..=n).map(|i| i as f64 * delta).collect())
    }

    /// Number of periods `n`.
    pub fn n(&self) -> usize {
        self.dates.len() - 1
    }

    pub fn dates(&self) -> &[f64] {
        &self.dates
    }

    pub fn date(&self, i: usize) -> f64 {
        self.dates[i]
    }

    /// Day-count fraction `delta_i = T_{i+1} - T_i`.
    pub fn delta(&self, i: usize) -> f64 {
        self.dates[i + 1] - self.dates[i]
    }

    /// Index `i` with `T_i == t` (up to 1e-10), if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.dates.iter().position(|&d| (d - t).abs() < 1e-10)
    }
}

/// Initial zero-bond prices `B_i(0)`, `i = 0..=n`, with `B_0(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountCurve {
    bonds: Vec<f64>,
}

impl DiscountCurve {
    /// Builds the curve from `B_1(0), ..., B_n(0)`.
    pub fn new(bonds_from_one: Vec<f64>) -> Result<Self> {
        let mut bonds = Vec::with_capacity(bonds_from_one.len() + 1);
        bonds.push(1.0);
        bonds.extend(bonds_from_one);
        for (i, &b) in bonds.iter().enumerate() {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::Invariant {
                    field: "bonds",
                    reason: format!("B_{i}(0) = {b} outside (0, 1]"),
                });
            }
        }
        Ok(Self { bonds })
    }

    pub fn n(&self) -> usize {
        self.bonds.len() - 1
    }

    pub fn bond(&self, i: usize) -> f64 {
        self.bonds[i]
    }

    pub fn bonds(&self) -> &[f64] {
        &self.bonds
    }
}

/// Forward Libors `L_i(0) = (B_i/B_{i+1} - 1)/delta_i` for `i = 1..n-1`.
pub fn strip_libors(curve: &DiscountCurve, tenor: &TenorStructure) -> Result<Vec<f64>> {
    let n = tenor.n();
    if curve.n() != n {
        return Err(Error::InvalidCurve(format!(
            "curve has {} bonds but the tenor has {} periods",
            curve.n(),
            n
        )));
    }
    if let Some((i, b)) = curve.bonds().iter().enumerate().find(|(_, b)| !(**b > 0.0)) {
        return Err(Error::InvalidCurve(format!("B_{i}(0) = {b} is not positive")));
    }
    Ok((1..n)
        .map(|i| (curve.bond(i) / curve.bond(i + 1) - 1.0) / tenor.delta(i))
        .collect())
}

/// Tenor, discount curve and stripped Libors bundled together.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    pub tenor: TenorStructure,
    pub curve: DiscountCurve,
    libors: Vec<f64>,
}

impl Market {
    pub fn new(tenor: TenorStructure, curve: DiscountCurve) -> Result<Self> {
        let libors = strip_libors(&curve, &tenor)?;
        Ok(Self { tenor, curve, libors })
    }

    pub fn n(&self) -> usize {
        self.tenor.n()
    }

    /// Number of Libors, `n - 1`.
    pub fn num_libors(&self) -> usize {
        self.libors.len()
    }

    /// `L_j(0)` for `j = 1..n-1`.
    pub fn libor(&self, j: usize) -> f64 {
        self.libors[j - 1]
    }

    pub fn libors(&self) -> &[f64] {
        &self.libors
    }

    pub fn bond(&self, i: usize) -> f64 {
        self.curve.bond(i)
    }

    pub fn date(&self, i: usize) -> f64 {
        self.tenor.date(i)
    }

    pub fn delta(&self, i: usize) -> f64 {
        self.tenor.delta(i)
    }

    pub fn check_expiry(&self, j: usize) -> Result<()> {
        if j == 0 || j >= self.n() {
            return Err(Error::Index(format!("expiry index {j} outside [1, {}]", self.n() - 1)));
        }
        Ok(())
    }

    pub fn check_swap(&self, p: usize, q: usize) -> Result<()> {
        if p == 0 || p >= q || q > self.n() {
            return Err(Error::Index(format!(
                "swap indices (p, q) = ({p}, {q}) must satisfy 1 <= p < q <= {}",
                self.n()
            )));
        }
        Ok(())
    }
}

/// Time-zero quantities of the swap over `[T_p, T_q]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwapContext {
    pub p: usize,
    pub q: usize,
    /// `B_{p,q}(0) = sum_{j=p}^{q-1} delta_j B_{j+1}(0)`.
    pub annuity: f64,
    /// `w_l^{p,q}(0)` for `l = p..q-1`, stored at `l - p`.
    pub weights: Vec<f64>,
    pub swap_rate: f64,
    /// Frozen `xi_j^{p,q}(0)` for `j = p..q-1`, stored at `j - p`.
    pub xi: Vec<f64>,
}

impl SwapContext {
    pub fn weight(&self, l: usize) -> f64 {
        self.weights[l - self.p]
    }

    pub fn xi(&self, j: usize) -> f64 {
        self.xi[j - self.p]
    }
}

pub fn swap_context(p: usize, q: usize, market: &Market) -> Result<SwapContext> {
    market.check_swap(p, q)?;
    let discounted: Vec<f64> = (p..q).map(|l| market.delta(l) * market.bond(l + 1)).collect();
    let annuity: f64 = discounted.iter().sum();
    let weights: Vec<f64> = discounted.iter().map(|d| d / annuity).collect();
    let (bp, bq) = (market.bond(p), market.bond(q));
    let swap_rate = (bp - bq) / annuity;

    // Tail sums sum_{l=j}^{q-1} w_l, accumulated from the back.
    let mut xi = vec![0.0; q - p];
    let mut tail = 0.0;
    for j in (p..q).rev() {
        tail += weights[j - p];
        let delta = market.delta(j);
        xi[j - p] = delta / (1.0 + delta * market.libor(j)) * (tail * (bp - bq) / annuity + bq / annuity);
    }

    Ok(SwapContext {
        p,
        q,
        annuity,
        weights,
        swap_rate,
        xi,
    })
}

/// Whether a panel quotes prices or Black implied vols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuoteKind {
    Price,
    Vol,
}

impl std::str::FromStr for QuoteKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "price" => Ok(QuoteKind::Price),
            "vol" => Ok(QuoteKind::Vol),
            other => Err(format!("unknown quote_kind `{other}` (expected price or vol)")),
        }
    }
}

impl std::fmt::Display for QuoteKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            QuoteKind::Price => "price",
            QuoteKind::Vol => "vol",
        })
    }
}

/// Caplet quotes for a single expiry `T_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapletPanel {
    pub expiry: usize,
    pub strikes: Vec<f64>,
    pub quotes: Vec<f64>,
    pub kind: QuoteKind,
}

impl CapletPanel {
    pub fn new(expiry: usize, strikes: Vec<f64>, quotes: Vec<f64>, kind: QuoteKind) -> Result<Self> {
        if strikes.is_empty() {
            return Err(Error::Invariant {
                field: "strike",
                reason: format!("panel for expiry {expiry} is empty"),
            });
        }
        if strikes.len() != quotes.len() {
            return Err(Error::Invariant {
                field: "quote",
                reason: format!("{} strikes but {} quotes", strikes.len(), quotes.len()),
            });
        }
        if strikes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invariant {
                field: "strike",
                reason: format!("strikes for expiry {expiry} must be strictly increasing"),
            });
        }
        if let Some(q) = quotes.iter().find(|q| !(**q > 0.0) || !q.is_finite()) {
            return Err(Error::Invariant {
                field: "quote",
                reason: format!("quote {q} for expiry {expiry} is not positive"),
            });
        }
        Ok(Self {
            expiry,
            strikes,
            quotes,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.strikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strikes.is_empty()
    }
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn read_records(path: &Path, expected_header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    if text.trim().is_empty() {
        return Err(parse_err(path, 1, "file is empty"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names != expected_header {
        return Err(parse_err(
            path,
            1,
            format!(
                "expected header `{}`, found `{}`",
                expected_header.join(","),
                names.join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        rows.push((line, record));
    }
    if rows.is_empty() {
        return Err(parse_err(path, 2, "no data rows"));
    }
    Ok(rows)
}

fn parse_f64(path: &Path, line: usize, field: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| parse_err(path, line, format!("field `{field}`: `{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("field `{field}`: `{s}` is not finite")));
    }
    Ok(v)
}

/// Reads a curve CSV with header `T,B`. A leading `0,1` row for `T_0` is
/// optional.
pub fn load_curve(path: impl AsRef<Path>) -> Result<(TenorStructure, DiscountCurve)> {
    let path = path.as_ref();
    let rows = read_records(path, &["T", "B"])?;
    let mut dates = Vec::with_capacity(rows.len() + 1);
    let mut bonds = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        let t = parse_f64(path, *line, "T", &rec[0])?;
        let b = parse_f64(path, *line, "B", &rec[1])?;
        if t == 0.0 && dates.is_empty() {
            if b != 1.0 {
                return Err(Error::Invariant {
                    field: "bonds",
                    reason: format!("line {line}: discount factor at T = 0 must be 1, got {b}"),
                });
            }
            continue;
        }
        if dates.is_empty() {
            dates.push(0.0);
        }
        dates.push(t);
        bonds.push(b);
    }
    if dates.is_empty() {
        dates.push(0.0);
    }
    let tenor = TenorStructure::new(dates)?;
    let curve = DiscountCurve::new(bonds)?;
    Ok((tenor, curve))
}

pub fn write_curve<W: Write>(out: W, tenor: &TenorStructure, curve: &DiscountCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["T", "B"]).map_err(csv_io)?;
    for i in 0..=tenor.n() {
        w.write_record([tenor.date(i).to_string(), curve.bond(i).to_string()])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a panel CSV with header `expiry_index,strike,quote,quote_kind`.
/// Rows are grouped by expiry; panels come back sorted by expiry index.
pub fn load_panels(path: impl AsRef<Path>) -> Result<Vec<CapletPanel>> {
    let path = path.as_ref();
    let rows = read_records(path, &["expiry_index", "strike", "quote", "quote_kind"])?;
    let mut grouped: BTreeMap<usize, (Vec<f64>, Vec<f64>, QuoteKind)> = BTreeMap::new();
    for (line, rec) in &rows {
        let expiry: usize = rec[0].parse().map_err(|_| {
            parse_err(
                path,
                *line,
                format!("field `expiry_index`: `{}` is not an index", &rec[0]),
            )
        })?;
        let strike = parse_f64(path, *line, "strike", &rec[1])?;
        let quote = parse_f64(path, *line, "quote", &rec[2])?;
        let kind: QuoteKind = rec[3].parse().map_err(|e: String| parse_err(path, *line, e))?;
        let entry = grouped.entry(expiry).or_insert_with(|| (Vec::new(), Vec::new(), kind));
        if entry.2 != kind {
            return Err(Error::Invariant {
                field: "quote_kind",
                reason: format!("line {line}: expiry {expiry} mixes price and vol quotes"),
            });
        }
        entry.0.push(strike);
        entry.1.push(quote);
    }
    grouped
        .into_iter()
        .map(|(expiry, (strikes, quotes, kind))| CapletPanel::new(expiry, strikes, quotes, kind))
        .collect()
}

pub fn write_panels<W: Write>(out: W, panels: &[CapletPanel]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["expiry_index", "strike", "quote", "quote_kind"])
        .map_err(csv_io)?;
    for panel in panels {
        for (k, q) in panel.strikes.iter().zip(&panel.quotes) {
            w.write_record([
                panel.expiry.to_string(),
                k.to_string(),
                q.to_string(),
                panel.kind.to_string(),
            ])
            .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
