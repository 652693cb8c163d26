//! `runoff` — a valuation laboratory for traditional with-profit life
//! business. Subcommands inspect the discount curve, generate risk-neutral
//! scenarios, project a portfolio through its run-off while checking that
//! no value leaks from the balance sheet, evaluate an analytic lower bound
//! for future discretionary benefits, and tabulate that bound across
//! parameter grids.
//!
//! Exit codes: 0 all checks pass, 2 a validation check failed, 3 bad
//! input, 4 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process;

use clap::{Args, Parser, Subcommand};

use runoff_core::alm::{project, Portfolio, ProjectionConfig, ScenarioLedger};
use runoff_core::bound::{lower_bound, sensitivity_grid, BoundInputs, BoundMode};
use runoff_core::curves::{DiscountCurve, SpotRateSeries};
use runoff_core::scenarios::{generate, martingale_test, MartingaleReport, ScenarioSet};
use runoff_core::valuation::{leakage_test, value, LeakageReport, ValuationResult};

use crate::config::{Overrides, RunConfig};
use crate::output::Report;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// A fatal command failure carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<runoff_core::Error> for Failure {
    fn from(err: runoff_core::Error) -> Failure {
        let code = match err {
            runoff_core::Error::Insolvent { .. } => EXIT_VALIDATION,
            runoff_core::Error::NonFinite { .. } => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "runoff",
    version,
    about = "Run-off valuation of with-profit life portfolios",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory against which relative input paths resolve
    /// [default: $RUNOFF_DATA_DIR, else ./data]
    #[arg(long, global = true, value_name = "DIR")]
    data_dir: Option<PathBuf>,

    /// Discount curve CSV
    #[arg(long, global = true, value_name = "FILE")]
    curve: Option<PathBuf>,

    /// Historical spot-rate series CSV
    #[arg(long, global = true, value_name = "FILE")]
    spots: Option<PathBuf>,

    /// Directory for reports and CSV exports (stdout only when absent)
    #[arg(long = "out-dir", global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Number of scenarios, generated in antithetic pairs
    #[arg(long, global = true, value_name = "N")]
    scenarios: Option<usize>,

    /// Seed for the scenario generator
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,

    /// Short-rate volatility
    #[arg(long = "vol", global = true, value_name = "SIGMA")]
    volatility: Option<f64>,

    /// Mean-reversion speed of the short rate
    #[arg(long, global = true, value_name = "KAPPA")]
    mean_reversion: Option<f64>,

    /// Relative tolerance for the leakage test
    #[arg(long, global = true, value_name = "TOL")]
    leakage_tolerance: Option<f64>,

    /// Relative tolerance for the martingale test
    #[arg(long, global = true, value_name = "TOL")]
    martingale_tolerance: Option<f64>,

    /// Carry full precision through the bound instead of the two-decimal
    /// rounding of the published worked example
    #[arg(long, global = true)]
    exact: bool,

    /// Keep the opening surplus fund inside the bound instead of
    /// deducting it
    #[arg(long = "no-deduct-sf", global = true)]
    no_deduct_sf: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print the discount curve, its forwards, and the deflator
    /// dispersion of the historical spot series
    Curve,

    /// Generate scenarios and run the martingale test
    Scenarios {
        /// Write the paths as CSV (scenario,year,forward,deflator)
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },

    /// Project a portfolio and run the leakage test
    Validate {
        /// Portfolio JSON
        #[arg(long, value_name = "FILE")]
        portfolio: Option<PathBuf>,

        /// Drop the guaranteed cash flow of one year ("3" or "t=3") to
        /// demonstrate that the leakage test catches it
        #[arg(long, value_name = "YEAR", value_parser = parse_drop_year)]
        drop_cashflow: Option<u32>,

        /// Write the projection ledger as CSV (scenario,year,field,value)
        #[arg(long, value_name = "FILE")]
        ledger_out: Option<PathBuf>,

        /// Read scenarios from a CSV dump instead of generating them
        #[arg(long, value_name = "FILE")]
        scenarios_csv: Option<PathBuf>,
    },

    /// Evaluate the lower bound for future discretionary benefits
    Bound {
        /// Balance-sheet inputs JSON
        #[arg(long, value_name = "FILE")]
        inputs: Option<PathBuf>,

        /// Participation rate override
        #[arg(long, value_name = "RATE")]
        gph: Option<f64>,

        /// Cross-financing fraction override
        #[arg(long = "C0", alias = "c0", value_name = "FRACTION")]
        c0: Option<f64>,

        /// Anchor maturity override, in years
        #[arg(long = "M", alias = "m", value_name = "YEARS")]
        m: Option<u32>,

        /// Disclosed discretionary-benefit value to compare against
        /// [default: the inputs file]
        #[arg(long, value_name = "VALUE")]
        reported_fdb: Option<f64>,
    },

    /// Tabulate the bound across maturities, participation rates, and
    /// cross-financing fractions
    Grid {
        /// Balance-sheet inputs JSON
        #[arg(long, value_name = "FILE")]
        inputs: Option<PathBuf>,

        /// Anchor maturities, comma-separated
        #[arg(long, value_delimiter = ',', default_values_t = [10u32, 15, 20], value_name = "YEARS")]
        m_values: Vec<u32>,

        /// Participation rates, comma-separated
        #[arg(long, value_delimiter = ',', default_values_t = [0.75, 0.80, 0.85], value_name = "RATES")]
        gph_values: Vec<f64>,

        /// Cross-financing fractions, comma-separated
        #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.03, 0.05], value_name = "FRACTIONS")]
        c0_values: Vec<f64>,
    },

    /// Run every check and produce a single report
    Report {
        /// Portfolio JSON
        #[arg(long, value_name = "FILE")]
        portfolio: Option<PathBuf>,

        /// Balance-sheet inputs JSON
        #[arg(long, value_name = "FILE")]
        inputs: Option<PathBuf>,
    },
}

fn parse_drop_year(s: &str) -> Result<u32, String> {
    let digits = s.strip_prefix("t=").unwrap_or(s);
    digits
        .parse()
        .map_err(|_| format!("expected a year like 3 or t=3, got {s:?}"))
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_PASS
                }
                _ => EXIT_INPUT,
            };
            let _ = e.print();
            process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => process::exit(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            process::exit(failure.code);
        }
    }
}

fn run(cli: Cli) -> Result<i32, Failure> {
    let mut overrides = overrides_from(&cli.common);
    match cli.command {
        Command::Curve => {
            let cfg = RunConfig::resolve(&overrides)?;
            cmd_curve(&cfg)
        }
        Command::Scenarios { out } => {
            let cfg = RunConfig::resolve(&overrides)?;
            cmd_scenarios(&cfg, out.as_deref())
        }
        Command::Validate {
            portfolio,
            drop_cashflow,
            ledger_out,
            scenarios_csv,
        } => {
            overrides.portfolio = portfolio;
            let cfg = RunConfig::resolve(&overrides)?;
            cmd_validate(
                &cfg,
                drop_cashflow,
                ledger_out.as_deref(),
                scenarios_csv.as_deref(),
            )
        }
        Command::Bound {
            inputs,
            gph,
            c0,
            m,
            reported_fdb,
        } => {
            overrides.bound_inputs = inputs;
            let cfg = RunConfig::resolve(&overrides)?;
            cmd_bound(&cfg, gph, c0, m, reported_fdb)
        }
        Command::Grid {
            inputs,
            m_values,
            gph_values,
            c0_values,
        } => {
            overrides.bound_inputs = inputs;
            let cfg = RunConfig::resolve(&overrides)?;
            cmd_grid(&cfg, &m_values, &gph_values, &c0_values)
        }
        Command::Report { portfolio, inputs } => {
            overrides.portfolio = portfolio;
            overrides.bound_inputs = inputs;
            let cfg = RunConfig::resolve(&overrides)?;
            cmd_report(&cfg)
        }
    }
}

fn overrides_from(common: &CommonArgs) -> Overrides {
    Overrides {
        config: common.config.clone(),
        data_dir: common.data_dir.clone(),
        curve: common.curve.clone(),
        spots: common.spots.clone(),
        portfolio: None,
        bound_inputs: None,
        scenarios: common.scenarios,
        seed: common.seed,
        leakage_tolerance: common.leakage_tolerance,
        martingale_tolerance: common.martingale_tolerance,
        output_dir: common.out_dir.clone(),
        exact: common.exact,
        no_deduct_surplus_fund: common.no_deduct_sf,
        volatility: common.volatility,
        mean_reversion: common.mean_reversion,
    }
}

fn load_curve(cfg: &RunConfig) -> Result<DiscountCurve, Failure> {
    Ok(DiscountCurve::read_csv(&cfg.curve)?)
}

fn load_series(cfg: &RunConfig) -> Result<SpotRateSeries, Failure> {
    Ok(SpotRateSeries::read_csv(
        &cfg.spots,
        config::SPOT_SERIES_TENOR,
    )?)
}

fn load_bound_inputs(cfg: &RunConfig) -> Result<BoundInputs, Failure> {
    let mut inputs = BoundInputs::from_json_file(&cfg.bound_inputs)?;
    if !cfg.deduct_surplus_fund {
        inputs.deduct_surplus_fund = false;
    }
    Ok(inputs)
}

fn bound_mode(cfg: &RunConfig) -> BoundMode {
    if cfg.exact {
        BoundMode::Exact
    } else {
        BoundMode::Rounded
    }
}

/// Restricts an imported scenario set to the first `tenor` years, the
/// part a projection of that tenor consumes.
fn truncate_set(set: ScenarioSet, tenor: u32) -> Result<ScenarioSet, Failure> {
    if set.horizon() <= tenor {
        return Ok(set);
    }
    let paths = set
        .paths()
        .iter()
        .map(|p| {
            runoff_core::scenarios::ScenarioPath::new(
                p.index(),
                p.forwards()[..tenor as usize].to_vec(),
            )
        })
        .collect::<runoff_core::Result<Vec<_>>>()?;
    Ok(ScenarioSet::from_parts(set.seed(), paths)?)
}

/// Scenario tenor a portfolio projection needs: the last liability year
/// or the last bond maturity, whichever comes later.
fn projection_tenor(portfolio: &Portfolio) -> u32 {
    let bonds = portfolio
        .assets
        .iter()
        .filter_map(|a| match a {
            runoff_core::alm::Asset::Bond(b) => Some(b.maturity),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    portfolio.final_year().max(bonds)
}

fn curve_section(
    report: &mut Report,
    cfg: &RunConfig,
    curve: &DiscountCurve,
    series: &SpotRateSeries,
) {
    report.section("curve");
    report.kv("source", cfg.curve.display());
    report.kv("tenors", curve.max_tenor());
    let factors = curve.factors();
    let (mut best_t, mut best) = (1u32, f64::NEG_INFINITY);
    for (i, &p) in factors.iter().enumerate() {
        if p > best {
            best = p;
            best_t = (i + 1) as u32;
        }
    }
    report.line(format!("max discount factor: {best:.6} at t = {best_t}"));
    let forwards = curve.bootstrap_forwards();
    let bank = forwards.bank_account();
    report.line(format!(
        "{:>4}  {:>10}  {:>10}  {:>12}",
        "t", "discount", "forward", "bank account"
    ));
    for t in 1..=curve.max_tenor() as usize {
        report.line(format!(
            "{:>4}  {:>10.6}  {:>10.6}  {:>12.6}",
            t,
            factors[t - 1],
            forwards.forwards()[t - 1],
            bank[t]
        ));
    }
    report.line("");
    report.kv("spot series", cfg.spots.display());
    report.line(format!(
        "observations: {}  tenor: {}y  mean rate: {:.6}  sd: {:.6}",
        series.len(),
        series.tenor(),
        series.mean_rate(),
        series.sd_rate()
    ));
    let covs: Vec<String> = [5u32, 10, 15, 20]
        .iter()
        .map(|&t| format!("t={t} {:.6}", series.deflator_cov(t)))
        .collect();
    report.line(format!("deflator CoV: {}", covs.join("  ")));
}

fn cmd_curve(cfg: &RunConfig) -> Result<i32, Failure> {
    let curve = load_curve(cfg)?;
    let series = load_series(cfg)?;
    let mut report = Report::bare();
    curve_section(&mut report, cfg, &curve, &series);
    report.emit(cfg.output_dir.as_deref(), "curve.txt")?;
    Ok(EXIT_PASS)
}

fn scenarios_section(report: &mut Report, cfg: &RunConfig, set: &ScenarioSet) {
    report.section("scenarios");
    report.line(format!(
        "scenarios: {} (antithetic pairs, seed {})",
        set.n_scenarios(),
        set.seed()
    ));
    report.kv("horizon", set.horizon());
    report.line(format!(
        "model: mean reversion {:.6}, volatility {:.6}",
        cfg.model.mean_reversion, cfg.model.volatility
    ));
}

fn cmd_scenarios(cfg: &RunConfig, out: Option<&Path>) -> Result<i32, Failure> {
    let curve = load_curve(cfg)?;
    let set = generate(&curve, &cfg.model, cfg.scenarios, cfg.seed)?;
    let martingale = martingale_test(&set, &curve, cfg.martingale_tolerance)?;
    let mut report = Report::bare();
    scenarios_section(&mut report, cfg, &set);
    output::martingale_section(&mut report, &martingale);
    report.emit(cfg.output_dir.as_deref(), "scenarios.txt")?;
    if let Some(path) = out {
        set.write_csv(path)?;
        println!("wrote {}", path.display());
    }
    Ok(if martingale.pass {
        EXIT_PASS
    } else {
        EXIT_NUMERICAL
    })
}

struct ValidationRun {
    set: ScenarioSet,
    martingale: MartingaleReport,
    outcome: Option<ValidationOutcome>,
}

struct ValidationOutcome {
    ledgers: Vec<ScenarioLedger>,
    result: ValuationResult,
    leakage: LeakageReport,
}

/// Generates (or imports) scenarios over the portfolio's own horizon,
/// gates them on the martingale test, and only then projects and values.
fn run_validation(
    cfg: &RunConfig,
    portfolio: &Portfolio,
    curve: &DiscountCurve,
    drop_cashflow: Option<u32>,
    scenarios_csv: Option<&Path>,
) -> Result<ValidationRun, Failure> {
    let tenor = projection_tenor(portfolio);
    let projection_curve = curve.truncate(tenor)?;
    let set = match scenarios_csv {
        Some(path) => {
            let imported = truncate_set(ScenarioSet::read_csv(path)?, tenor)?;
            imported.with_model(&projection_curve, &cfg.model)?
        }
        None => generate(&projection_curve, &cfg.model, cfg.scenarios, cfg.seed)?,
    };
    let martingale = martingale_test(&set, &projection_curve, cfg.martingale_tolerance)?;
    if !martingale.pass {
        return Ok(ValidationRun {
            set,
            martingale,
            outcome: None,
        });
    }
    let projection = ProjectionConfig {
        drop_cashflow_year: drop_cashflow,
    };
    let ledgers = project(portfolio, &set, &projection)?;
    let result = value(&ledgers, &projection_curve)?;
    let opening = portfolio.opening_balance(&projection_curve)?;
    let leakage = leakage_test(
        &result,
        opening.book_value,
        opening.unrealized_gains,
        cfg.leakage_tolerance,
    );
    Ok(ValidationRun {
        set,
        martingale,
        outcome: Some(ValidationOutcome {
            ledgers,
            result,
            leakage,
        }),
    })
}

fn cmd_validate(
    cfg: &RunConfig,
    drop_cashflow: Option<u32>,
    ledger_out: Option<&Path>,
    scenarios_csv: Option<&Path>,
) -> Result<i32, Failure> {
    let curve = load_curve(cfg)?;
    let portfolio = Portfolio::from_json_file(&cfg.portfolio)?;
    let run = run_validation(cfg, &portfolio, &curve, drop_cashflow, scenarios_csv)?;

    let mut report = Report::bare();
    report.section("portfolio");
    report.kv("source", cfg.portfolio.display());
    report.kv("name", portfolio.name.as_deref().unwrap_or("unnamed"));
    if let Some(year) = drop_cashflow {
        report.line(format!(
            "fault injection: guaranteed cash flow of year {year} dropped"
        ));
    }
    scenarios_section(&mut report, cfg, &run.set);
    output::martingale_section(&mut report, &run.martingale);

    let code = match &run.outcome {
        None => {
            report.line("martingale test failed; projection skipped");
            EXIT_NUMERICAL
        }
        Some(outcome) => {
            report.section("valuation");
            output::valuation_section(&mut report, &outcome.result);
            output::leakage_section(&mut report, &outcome.leakage);
            if let Some(path) = ledger_out {
                let ids: Vec<String> = portfolio.contracts.iter().map(|c| c.id.clone()).collect();
                let csv = output::ledger_csv(&outcome.ledgers, &ids);
                write_with_parents(path, &csv)?;
                println!("wrote {}", path.display());
            }
            if outcome.leakage.pass {
                EXIT_PASS
            } else {
                EXIT_VALIDATION
            }
        }
    };
    report.emit(cfg.output_dir.as_deref(), "validate.txt")?;
    Ok(code)
}

fn write_with_parents(path: &Path, content: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Failure {
                code: EXIT_INPUT,
                message: format!("{}: {e}", parent.display()),
            })?;
        }
    }
    std::fs::write(path, content).map_err(|e| Failure {
        code: EXIT_INPUT,
        message: format!("{}: {e}", path.display()),
    })
}

fn cmd_bound(
    cfg: &RunConfig,
    gph: Option<f64>,
    c0: Option<f64>,
    m: Option<u32>,
    reported_fdb: Option<f64>,
) -> Result<i32, Failure> {
    let curve = load_curve(cfg)?;
    let series = load_series(cfg)?;
    let mut inputs = load_bound_inputs(cfg)?;
    let what_if = gph.is_some() || c0.is_some() || m.is_some();
    if let Some(gph) = gph {
        inputs.gph = gph;
    }
    if let Some(c0) = c0 {
        inputs.c0 = c0;
    }
    if let Some(m) = m {
        inputs.m = m;
    }
    if let Some(reported) = reported_fdb {
        inputs.reported_fdb = Some(reported);
    } else if what_if {
        inputs.reported_fdb = None;
    }
    inputs.validate()?;
    let bound = lower_bound(&inputs, &curve, &series, bound_mode(cfg))?;

    let mut report = Report::bare();
    report.section("bound");
    report.kv("source", cfg.bound_inputs.display());
    if let Some(name) = &inputs.name {
        report.kv("name", name);
    }
    report.line(format!(
        "assets: {:.6}  guaranteed benefits: {:.6}  surplus fund: {:.6}",
        inputs.assets(),
        inputs.gb,
        inputs.sf0
    ));
    report.line(format!(
        "gph: {}  M: {}  C0: {}  horizon: {}y",
        inputs.gph, inputs.m, inputs.c0, inputs.horizon
    ));
    output::bound_section(&mut report, &bound, inputs.reported_fdb);
    report.emit(cfg.output_dir.as_deref(), "bound.txt")?;

    if let Some(dir) = &cfg.output_dir {
        let mut csv = String::from("year,asset_runoff,eta,depreciation\n");
        for b in &bound.buckets {
            csv.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                b.year, b.asset_runoff, b.eta, b.depreciation
            ));
        }
        output::write_file(dir, "bound_buckets.csv", &csv)?;
    }

    let fail = inputs
        .reported_fdb
        .is_some_and(|reported| bound.value > reported);
    Ok(if fail { EXIT_VALIDATION } else { EXIT_PASS })
}

fn cmd_grid(
    cfg: &RunConfig,
    m_values: &[u32],
    gph_values: &[f64],
    c0_values: &[f64],
) -> Result<i32, Failure> {
    let curve = load_curve(cfg)?;
    let series = load_series(cfg)?;
    let inputs = load_bound_inputs(cfg)?;
    let grid = sensitivity_grid(
        &inputs,
        &curve,
        &series,
        m_values,
        gph_values,
        c0_values,
        bound_mode(cfg),
    )?;

    let mut report = Report::bare();
    report.section("grid");
    report.kv("source", cfg.bound_inputs.display());
    output::grid_tables(&mut report, &grid);
    report.emit(cfg.output_dir.as_deref(), "grid.txt")?;

    if let Some(dir) = &cfg.output_dir {
        let (lb, f) = output::grid_csv(&grid);
        output::write_file(dir, "grid_lb.csv", &lb)?;
        output::write_file(dir, "grid_f.csv", &f)?;
    }
    Ok(EXIT_PASS)
}

fn cmd_report(cfg: &RunConfig) -> Result<i32, Failure> {
    let curve = load_curve(cfg)?;
    let series = load_series(cfg)?;
    let portfolio = Portfolio::from_json_file(&cfg.portfolio)?;
    let inputs = load_bound_inputs(cfg)?;

    let mut report = Report::new("run-off valuation report");
    curve_section(&mut report, cfg, &curve, &series);

    let run = run_validation(cfg, &portfolio, &curve, None, None)?;
    report.section("portfolio");
    report.kv("source", cfg.portfolio.display());
    report.kv("name", portfolio.name.as_deref().unwrap_or("unnamed"));
    scenarios_section(&mut report, cfg, &run.set);
    output::martingale_section(&mut report, &run.martingale);

    let mut code = EXIT_PASS;
    match &run.outcome {
        None => {
            report.line("martingale test failed; projection skipped");
            code = EXIT_NUMERICAL;
        }
        Some(outcome) => {
            report.section("valuation");
            output::valuation_section(&mut report, &outcome.result);
            output::leakage_section(&mut report, &outcome.leakage);
            if !outcome.leakage.pass {
                code = EXIT_VALIDATION;
            }
        }
    }

    let bound = lower_bound(&inputs, &curve, &series, bound_mode(cfg))?;
    report.section("bound");
    report.kv("source", cfg.bound_inputs.display());
    output::bound_section(&mut report, &bound, inputs.reported_fdb);
    if code == EXIT_PASS
        && inputs
            .reported_fdb
            .is_some_and(|reported| bound.value > reported)
    {
        code = EXIT_VALIDATION;
    }

    let grid = sensitivity_grid(
        &inputs,
        &curve,
        &series,
        &[10, 15, 20],
        &[0.75, 0.80, 0.85],
        &[0.01, 0.03, 0.05],
        bound_mode(cfg),
    )?;
    report.section("grid");
    output::grid_tables(&mut report, &grid);

    report.emit(cfg.output_dir.as_deref(), "report.txt")?;
    Ok(code)
}
