use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use svlibor_core::affine::{effective_caplet_params, swap_effective_params_for};
use svlibor_core::calibrate::{calibrate_all, panel_prices, synthetic_panels, write_fit_report, CalibrationOptions};
use svlibor_core::charfn::{caplet_cf_params, swaption_cf_params};
use svlibor_core::fixtures::{table_curve, table_params, table_tenor, CAPLET_DECAY};
use svlibor_core::fourier::{caplet_prices, implied_vol, swaption_prices, QuadMode, QuadratureConfig};
use svlibor_core::market_data::{load_curve, load_panels, swap_context, write_panels};
use svlibor_core::model::instantaneous_correlations;
use svlibor_core::montecarlo::{mc_caplets, mc_swaptions, McConfig, McResult, Substitution};
use svlibor_core::{CapletPanel, Error, LiborModel, Market, ModelParams, QuoteKind, Result};

#[derive(Parser)]
#[command(
    name = "svlibor",
    version,
    about = "Stochastic volatility Libor model: pricing, simulation, calibration"
)]
struct Cli {
    /// Discount curve CSV (`T,B`). Defaults to the built-in 20-year annual curve.
    #[arg(long, global = true)]
    curve: Option<PathBuf>,

    /// Model parameter JSON. Defaults to the built-in parameter table.
    #[arg(long, global = true)]
    model: Option<PathBuf>,

    /// Override the Libor correlation decay of the model.
    #[arg(long, global = true)]
    corr_decay: Option<f64>,

    /// Output file; stdout when absent.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,

    /// Worker threads for pricing and simulation.
    #[arg(long, global = true, env = "SVLIBOR_THREADS")]
    threads: Option<usize>,

    #[command(flatten)]
    quad: QuadArgs,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct QuadArgs {
    /// Truncation of the Fourier integral.
    #[arg(long, global = true)]
    quad_zmax: Option<f64>,

    /// Quadrature node count.
    #[arg(long, global = true)]
    quad_n: Option<usize>,

    #[arg(long, global = true, value_enum)]
    quad_mode: Option<QuadModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum QuadModeArg {
    Adaptive,
    Panels,
    Fft,
}

impl From<QuadModeArg> for QuadMode {
    fn from(m: QuadModeArg) -> Self {
        match m {
            QuadModeArg::Adaptive => QuadMode::Adaptive,
            QuadModeArg::Panels => QuadMode::Panels,
            QuadModeArg::Fft => QuadMode::Fft,
        }
    }
}

impl QuadArgs {
    fn config(&self, default_mode: QuadMode) -> QuadratureConfig {
        let mut q = QuadratureConfig::with_mode(self.quad_mode.map_or(default_mode, Into::into));
        if let Some(z) = self.quad_zmax {
            q.z_max = z;
        }
        if let Some(n) = self.quad_n {
            q.nodes = n;
        }
        q
    }
}

#[derive(Args, Clone)]
struct McArgs {
    #[arg(long, default_value_t = 30_000)]
    paths: usize,

    #[arg(long, default_value_t = 8)]
    steps_per_year: usize,

    #[arg(long, default_value_t = 20_100_920)]
    seed: u64,

    /// Pair every path with its sign-flipped twin.
    #[arg(long)]
    antithetic: bool,
}

impl McArgs {
    fn config(&self, substitution: Substitution) -> McConfig {
        McConfig {
            paths: self.paths,
            steps_per_year: self.steps_per_year,
            seed: self.seed,
            substitution,
            antithetic: self.antithetic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SubstituteArg {
    None,
    Caplet,
    Swap,
}

#[derive(Subcommand)]
enum Command {
    /// Initial Libors stripped from the discount curve.
    Strip,

    /// Fourier caplet prices, optionally next to Monte Carlo.
    PriceCaplet {
        #[arg(long)]
        j: usize,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        strikes: Vec<f64>,
        #[command(flatten)]
        table: TableArgs,
    },

    /// Fourier payer swaption prices on the leg `[T_p, T_q]`.
    PriceSwaption {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        q: usize,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        strikes: Vec<f64>,
        #[command(flatten)]
        table: TableArgs,
    },

    /// Monte Carlo price of one caplet (`--j`) or swaption (`--p --q`) as JSON.
    McPrice {
        #[arg(long, conflicts_with_all = ["p", "q"], required_unless_present_all = ["p", "q"])]
        j: Option<usize>,
        #[arg(long, requires = "q")]
        p: Option<usize>,
        #[arg(long, requires = "p")]
        q: Option<usize>,
        #[arg(long, allow_negative_numbers = true)]
        strike: f64,
        /// Variance substitution: `caplet` uses the expiry of the product, `swap` its leg.
        #[arg(long, value_enum, default_value = "none")]
        substitute: SubstituteArg,
        #[command(flatten)]
        mc: McArgs,
    },

    /// Fit `(|beta|, kappa, eps, rho)` per expiry to caplet panels.
    Calibrate {
        /// Panel CSV (`expiry_index,strike,quote,quote_kind`).
        #[arg(long)]
        panels: PathBuf,
        /// Per-quote fit report CSV.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        max_evals: usize,
        #[arg(long, default_value_t = 2)]
        restarts: usize,
    },

    /// Black implied vols: of a given price, or of the model caplet smile at `--j`.
    ImpliedVol {
        #[arg(long, conflicts_with = "price")]
        j: Option<usize>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        strikes: Vec<f64>,
        #[arg(long, requires_all = ["forward", "strike", "expiry"])]
        price: Option<f64>,
        #[arg(long)]
        forward: Option<f64>,
        #[arg(long)]
        strike: Option<f64>,
        #[arg(long)]
        expiry: Option<f64>,
        /// Price multiplier (discount times accrual).
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },

    /// Instantaneous correlations of all expiry pairs with `v = theta`.
    Correlations,

    /// Caplet panels generated by the model itself.
    SynthPanels {
        #[arg(long, value_delimiter = ',', required = true)]
        strikes: Vec<f64>,
        /// Expiry indices; all when absent.
        #[arg(long, value_delimiter = ',')]
        expiries: Vec<usize>,
        #[arg(long, value_enum, default_value = "price")]
        kind: KindArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Price,
    Vol,
}

#[derive(Args)]
struct TableArgs {
    /// Skip the Monte Carlo columns.
    #[arg(long)]
    no_mc: bool,

    /// Monte Carlo variance substitution for the comparison column.
    #[arg(long, value_enum, default_value = "none")]
    substitute: SubstituteArg,

    #[command(flatten)]
    mc: McArgs,

    /// Write the effective affine parameters as JSON.
    #[arg(long)]
    dump_effective: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: config: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::from(1)
        }
    }
}

struct Setup {
    market: Market,
    params: ModelParams,
}

impl Setup {
    fn load(cli: &Cli) -> Result<Self> {
        let (tenor, curve) = match &cli.curve {
            Some(path) => load_curve(path)?,
            None => (table_tenor(), table_curve()),
        };
        let market = Market::new(tenor, curve)?;
        let mut params = match &cli.model {
            Some(path) => ModelParams::load(path)?,
            None => table_params(CAPLET_DECAY),
        };
        if let Some(a) = cli.corr_decay {
            params.corr_decay = a;
            params.validate()?;
        }
        if params.num_libors() != market.num_libors() {
            return Err(Error::Invariant {
                field: "kappa",
                reason: format!(
                    "model has {} expiries but the curve defines {} Libors",
                    params.num_libors(),
                    market.num_libors()
                ),
            });
        }
        Ok(Setup { market, params })
    }

    fn model(&self) -> Result<LiborModel> {
        LiborModel::new(self.params.clone(), &self.market.tenor)
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let out = cli.output.as_deref();
    match &cli.command {
        Command::Strip => {
            let setup = Setup::load(cli)?;
            let m = &setup.market;
            let mut w = csv_writer(out)?;
            row(&mut w, ["i", "T", "B", "L"])?;
            for i in 1..=m.num_libors() {
                row(&mut w, [i.to_string(), num(m.date(i)), num(m.bond(i)), num(m.libor(i))])?;
            }
            w.flush()?;
            Ok(())
        }
        Command::PriceCaplet { j, strikes, table } => {
            let setup = Setup::load(cli)?;
            let model = setup.model()?;
            let market = &setup.market;
            let quad = cli.quad.config(QuadMode::Adaptive);
            if let Some(path) = &table.dump_effective {
                #[derive(Serialize)]
                struct Dump<A, B> {
                    effective: A,
                    characteristic_function: B,
                }
                let dump = Dump {
                    effective: effective_caplet_params(*j, &model, market)?,
                    characteristic_function: caplet_cf_params(*j, &model, market)?,
                };
                write_json(Some(path), &dump)?;
            }
            let fourier = caplet_prices(*j, strikes, &model, market, &quad)?;
            let mc = if table.no_mc {
                None
            } else {
                let sub = match table.substitute {
                    SubstituteArg::None => Substitution::None,
                    SubstituteArg::Caplet => Substitution::Caplet { j: *j },
                    SubstituteArg::Swap => Substitution::Swap { p: *j, q: *j + 1 },
                };
                Some(mc_caplets(*j, strikes, &model, market, &table.mc.config(sub))?)
            };
            write_table(out, strikes, &fourier, mc.as_deref())
        }
        Command::PriceSwaption { p, q, strikes, table } => {
            let setup = Setup::load(cli)?;
            let model = setup.model()?;
            let market = &setup.market;
            let quad = cli.quad.config(QuadMode::Adaptive);
            if let Some(path) = &table.dump_effective {
                #[derive(Serialize)]
                struct Dump<A, B, C> {
                    swap: A,
                    effective: B,
                    characteristic_function: C,
                }
                let dump = Dump {
                    swap: swap_context(*p, *q, market)?,
                    effective: swap_effective_params_for(*p, *q, &model, market)?,
                    characteristic_function: swaption_cf_params(*p, *q, &model, market)?,
                };
                write_json(Some(path), &dump)?;
            }
            let fourier = swaption_prices(*p, *q, strikes, &model, market, &quad)?;
            let mc = if table.no_mc {
                None
            } else {
                let sub = match table.substitute {
                    SubstituteArg::None => Substitution::None,
                    SubstituteArg::Caplet => Substitution::Caplet { j: *p },
                    SubstituteArg::Swap => Substitution::Swap { p: *p, q: *q },
                };
                Some(mc_swaptions(*p, *q, strikes, &model, market, &table.mc.config(sub))?)
            };
            write_table(out, strikes, &fourier, mc.as_deref())
        }
        Command::McPrice {
            j,
            p,
            q,
            strike,
            substitute,
            mc,
        } => {
            let setup = Setup::load(cli)?;
            let model = setup.model()?;
            let market = &setup.market;
            let result = match (j, p, q) {
                (Some(j), _, _) => {
                    let sub = match substitute {
                        SubstituteArg::None => Substitution::None,
                        SubstituteArg::Caplet => Substitution::Caplet { j: *j },
                        SubstituteArg::Swap => Substitution::Swap { p: *j, q: *j + 1 },
                    };
                    mc_caplets(*j, &[*strike], &model, market, &mc.config(sub))?
                }
                (None, Some(p), Some(q)) => {
                    let sub = match substitute {
                        SubstituteArg::None => Substitution::None,
                        SubstituteArg::Caplet => Substitution::Caplet { j: *p },
                        SubstituteArg::Swap => Substitution::Swap { p: *p, q: *q },
                    };
                    mc_swaptions(*p, *q, &[*strike], &model, market, &mc.config(sub))?
                }
                _ => return Err(Error::Config("give --j, or both --p and --q".into())),
            };
            write_json(out, &result[0])
        }
        Command::Calibrate {
            panels,
            report,
            max_evals,
            restarts,
        } => {
            let setup = Setup::load(cli)?;
            let panels = load_panels(panels)?;
            let opts = CalibrationOptions {
                max_evals: *max_evals,
                restarts: *restarts,
                quad: cli.quad.config(QuadMode::Panels),
                ..Default::default()
            };
            let (result, rows) = calibrate_all(&panels, &setup.params, &setup.market, &opts)?;
            if let Some(path) = report {
                write_fit_report(BufWriter::new(File::create(path)?), &rows)?;
            }
            write_json(out, &result)
        }
        Command::ImpliedVol {
            j,
            strikes,
            price,
            forward,
            strike,
            expiry,
            scale,
        } => {
            if let Some(price) = price {
                let (f, k, t) = (
                    forward.unwrap_or_default(),
                    strike.unwrap_or_default(),
                    expiry.unwrap_or_default(),
                );
                return write_json(out, &implied_vol(*price, f, k, t, *scale)?);
            }
            let Some(j) = j else {
                return Err(Error::Config(
                    "give --j with --strikes, or --price with --forward, --strike, --expiry".into(),
                ));
            };
            if strikes.is_empty() {
                return Err(Error::Config("--strikes is required with --j".into()));
            }
            let setup = Setup::load(cli)?;
            let model = setup.model()?;
            let market = &setup.market;
            let prices = caplet_prices(*j, strikes, &model, market, &cli.quad.config(QuadMode::Adaptive))?;
            let alpha = model.alpha(*j);
            let fwd = market.libor(*j) + alpha;
            let sc = market.delta(*j) * market.bond(*j + 1);
            let mut w = csv_writer(out)?;
            row(&mut w, ["strike", "price", "implied_vol"])?;
            for (&k, &pr) in strikes.iter().zip(&prices) {
                let vol = implied_vol(pr, fwd, k + alpha, market.date(*j), sc)?;
                row(&mut w, [num(k), num(pr), num(vol.vol)])?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Correlations => {
            let setup = Setup::load(cli)?;
            let model = setup.model()?;
            let m = model.num_libors();
            let mut w = csv_writer(out)?;
            row(&mut w, ["j", "k", "libor_libor", "libor_vol", "vol_vol"])?;
            for j in 1..=m {
                for k in 1..=m {
                    let c = instantaneous_correlations(&model, j, k, model.theta(j), model.theta(k))?;
                    row(
                        &mut w,
                        [
                            j.to_string(),
                            k.to_string(),
                            num(c.libor_libor),
                            num(c.libor_vol),
                            num(c.vol_vol),
                        ],
                    )?;
                }
            }
            w.flush()?;
            Ok(())
        }
        Command::SynthPanels {
            strikes,
            expiries,
            kind,
        } => {
            let setup = Setup::load(cli)?;
            let model = setup.model()?;
            let market = &setup.market;
            let expiries = if expiries.is_empty() {
                (1..=market.num_libors()).collect()
            } else {
                expiries.clone()
            };
            let mut panels = synthetic_panels(strikes, expiries, &model, market, &cli.quad.config(QuadMode::Adaptive))?;
            if let KindArg::Vol = kind {
                panels = panels
                    .into_iter()
                    .map(|p| to_vol_panel(p, &model, market))
                    .collect::<Result<_>>()?;
            }
            let mut w = open_output(out)?;
            write_panels(&mut w, &panels)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn to_vol_panel(panel: CapletPanel, model: &LiborModel, market: &Market) -> Result<CapletPanel> {
    let j = panel.expiry;
    let prices = panel_prices(&panel, model, market)?;
    let alpha = model.alpha(j);
    let forward = market.libor(j) + alpha;
    let scale = market.delta(j) * market.bond(j + 1);
    let vols = panel
        .strikes
        .iter()
        .zip(&prices)
        .map(|(&k, &p)| implied_vol(p, forward, k + alpha, market.date(j), scale).map(|v| v.vol))
        .collect::<Result<Vec<_>>>()?;
    CapletPanel::new(j, panel.strikes, vols, QuoteKind::Vol)
}

fn num(x: f64) -> String {
    x.to_string()
}

fn csv_writer(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    Ok(csv::Writer::from_writer(open_output(path)?))
}

fn row<W: Write, I, S>(w: &mut csv::Writer<W>, fields: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields).map_err(|e| Error::Io(io::Error::other(e)))
}

fn write_table(out: Option<&Path>, strikes: &[f64], fourier: &[f64], mc: Option<&[McResult]>) -> Result<()> {
    let mut w = csv_writer(out)?;
    row(
        &mut w,
        ["strike", "fourier_price", "mc_price", "mc_se", "abs_error", "rel_error"],
    )?;
    for (i, (&k, &f)) in strikes.iter().zip(fourier).enumerate() {
        match mc {
            Some(mc) => {
                let r = &mc[i];
                let abs = (f - r.price).abs();
                let rel = if r.price != 0.0 { abs / r.price.abs() } else { f64::NAN };
                row(&mut w, [num(k), num(f), num(r.price), num(r.se), num(abs), num(rel)])?;
            }
            None => row(
                &mut w,
                [
                    num(k),
                    num(f),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ],
            )?,
        }
    }
    w.flush()?;
    Ok(())
}
