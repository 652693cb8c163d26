//! Monte Carlo valuation of projected ledgers and the balance-sheet
//! leakage test.
//!
//! Every component is a deflated sum over the ledger rows, averaged across
//! scenarios: the best estimate splits into guaranteed benefits and
//! discretionary (future bonus) benefits, the value in force is the
//! deflated shareholder transfer, and the tax component the deflated tax.
//! Because the guaranteed benefit schedule is deterministic, its headline
//! value is discounted directly on the curve — the scenario-based estimate
//! of the same number is kept as a consistency diagnostic, since the two
//! may differ only by Monte Carlo noise.
//!
//! The leakage test checks the model-independent identity that opening
//! book value plus unrealized gains must equal best estimate plus value in
//! force plus tax plus the deflated terminal market value. Any residual
//! beyond Monte Carlo noise means the projection created or destroyed
//! value. A second identity pins down where a leak sits: the deflated sum
//! of unexpected returns (asset return in excess of the risk-free return
//! on book value) must equal the opening unrealized gains minus the
//! deflated terminal unrealized gains.
//!
//! Aggregation is strictly scenario-index-ordered with a fixed reduction
//! tree, so results are bit-reproducible regardless of ledger order or
//! thread scheduling. Standard errors treat each antithetic pair as one
//! observation.

use crate::alm::{Portfolio, ScenarioLedger};
use crate::curves::DiscountCurve;
use crate::error::{Error, Result};
use crate::util::tree_sum;

/// Leakage-test pass threshold used when the caller does not override it:
/// one per mille of the opening market value.
pub const DEFAULT_LEAKAGE_TOLERANCE: f64 = 1e-3;

/// A Monte Carlo estimate with its standard error. The standard error
/// treats each antithetic pair as a single observation; deterministic
/// single-scenario runs report zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentEstimate {
    pub value: f64,
    pub std_error: f64,
}

fn mc_estimate(values_by_scenario: &[f64]) -> ComponentEstimate {
    let n = values_by_scenario.len();
    let mean = tree_sum(values_by_scenario) / n as f64;
    let m = n.div_ceil(2);
    if m < 2 {
        return ComponentEstimate {
            value: mean,
            std_error: 0.0,
        };
    }
    let mut pairs = Vec::with_capacity(m);
    for p in 0..m {
        let a = values_by_scenario[2 * p];
        let b = if 2 * p + 1 < n {
            values_by_scenario[2 * p + 1]
        } else {
            a
        };
        pairs.push((a + b) / 2.0);
    }
    let pair_mean = tree_sum(&pairs) / m as f64;
    let var = pairs
        .iter()
        .map(|v| (v - pair_mean) * (v - pair_mean))
        .sum::<f64>()
        / (m - 1) as f64;
    ComponentEstimate {
        value: mean,
        std_error: (var / m as f64).sqrt(),
    }
}

/// All valuation components of one projection run.
#[derive(Debug, Clone)]
pub struct ValuationResult {
    pub n_scenarios: usize,
    pub horizon: u32,
    /// Opening asset (= liability) book value.
    pub opening_book: f64,
    pub opening_market: f64,
    pub opening_unrealized: f64,
    /// Guaranteed benefits discounted on the curve — the headline number.
    pub guaranteed: f64,
    /// The same guaranteed benefits estimated with scenario deflators.
    pub guaranteed_scenario: ComponentEstimate,
    /// Value of discretionary (future bonus) benefits.
    pub discretionary: ComponentEstimate,
    /// `guaranteed + discretionary.value`.
    pub best_estimate: f64,
    /// Deflated shareholder transfers (value in force).
    pub vif: ComponentEstimate,
    pub tax: ComponentEstimate,
    /// Deflated terminal market value.
    pub terminal: ComponentEstimate,
    /// Deflated terminal unrealized gains.
    pub terminal_unrealized: ComponentEstimate,
    /// Deflated sum of unexpected returns over all years.
    pub unexpected: ComponentEstimate,
    /// `opening_market − (best_estimate + vif + tax + terminal)`.
    pub residual: f64,
    /// `residual` relative to the opening market value.
    pub residual_rel: f64,
}

/// Values a set of projected ledgers against the curve they were
/// generated from.
pub fn value(ledgers: &[ScenarioLedger], curve: &DiscountCurve) -> Result<ValuationResult> {
    if ledgers.is_empty() {
        return Err(Error::invalid("no ledgers to value"));
    }
    let n = ledgers.len();
    let horizon = ledgers[0].final_year();
    if horizon == 0 {
        return Err(Error::invalid("ledgers contain no projected years"));
    }
    if curve.max_tenor() < horizon {
        return Err(Error::OutOfHorizon {
            argument: horizon,
            horizon: curve.max_tenor(),
        });
    }

    // Index-ordered view, independent of the storage order of `ledgers`.
    let mut by_index: Vec<Option<&ScenarioLedger>> = vec![None; n];
    for ledger in ledgers {
        if ledger.final_year() != horizon {
            return Err(Error::invalid(format!(
                "scenario {} runs {} years, scenario {} runs {}",
                ledger.scenario,
                ledger.final_year(),
                ledgers[0].scenario,
                horizon
            )));
        }
        let slot = by_index.get_mut(ledger.scenario).ok_or_else(|| {
            Error::invalid(format!(
                "scenario index {} out of range for {n} ledgers",
                ledger.scenario
            ))
        })?;
        if slot.replace(ledger).is_some() {
            return Err(Error::invalid(format!(
                "duplicate scenario index {}",
                ledger.scenario
            )));
        }
    }
    let by_index: Vec<&ScenarioLedger> = by_index.into_iter().map(Option::unwrap).collect();

    let mut guaranteed = 0.0;
    for row in &by_index[0].rows {
        guaranteed += row.cf_guaranteed * curve.factor(row.year)?;
    }

    let mut gb = vec![0.0; n];
    let mut fdb = vec![0.0; n];
    let mut vif = vec![0.0; n];
    let mut tax = vec![0.0; n];
    let mut terminal = vec![0.0; n];
    let mut terminal_ug = vec![0.0; n];
    let mut unexpected = vec![0.0; n];
    for (s, ledger) in by_index.iter().enumerate() {
        for row in &ledger.rows {
            let d = row.deflator;
            gb[s] += d * row.cf_guaranteed;
            fdb[s] += d * row.cf_discretionary;
            vif[s] += d * row.shareholder;
            tax[s] += d * row.tax;
            unexpected[s] += d * row.unexpected_return;
        }
        let last = ledger.rows.last().unwrap();
        terminal[s] = last.deflator * last.market_value;
        terminal_ug[s] = last.deflator * last.unrealized_gains;
    }

    let discretionary = mc_estimate(&fdb);
    let vif = mc_estimate(&vif);
    let tax = mc_estimate(&tax);
    let terminal = mc_estimate(&terminal);
    let best_estimate = guaranteed + discretionary.value;

    let opening_book = by_index[0].opening_book;
    let opening_market = by_index[0].opening_market;
    let residual = opening_market - (best_estimate + vif.value + tax.value + terminal.value);
    let denom = if opening_market != 0.0 {
        opening_market.abs()
    } else {
        1.0
    };

    Ok(ValuationResult {
        n_scenarios: n,
        horizon,
        opening_book,
        opening_market,
        opening_unrealized: opening_market - opening_book,
        guaranteed,
        guaranteed_scenario: mc_estimate(&gb),
        discretionary,
        best_estimate,
        vif,
        tax,
        terminal,
        terminal_unrealized: mc_estimate(&terminal_ug),
        unexpected: mc_estimate(&unexpected),
        residual,
        residual_rel: residual / denom,
    })
}

/// Outcome of the leakage test.
#[derive(Debug, Clone, Copy)]
pub struct LeakageReport {
    /// `bv0 + ug0`, the opening market value.
    pub lhs: f64,
    /// Best estimate + value in force + tax + deflated terminal value.
    pub rhs: f64,
    pub residual: f64,
    pub residual_rel: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks the basic identity `bv0 + ug0 = BE + VIF + TAX + terminal`
/// against an explicitly supplied opening balance sheet.
pub fn leakage_test(result: &ValuationResult, bv0: f64, ug0: f64, tolerance: f64) -> LeakageReport {
    let lhs = bv0 + ug0;
    let rhs = result.best_estimate + result.vif.value + result.tax.value + result.terminal.value;
    let residual = lhs - rhs;
    let denom = if lhs != 0.0 { lhs.abs() } else { 1.0 };
    let residual_rel = residual / denom;
    LeakageReport {
        lhs,
        rhs,
        residual,
        residual_rel,
        tolerance,
        pass: residual_rel.abs() <= tolerance,
    }
}

/// Outcome of the unexpected-return identity check: deflated unexpected
/// returns must add up to the opening unrealized gains minus the deflated
/// terminal unrealized gains.
#[derive(Debug, Clone, Copy)]
pub struct UnexpectedReturnCheck {
    pub deflated_total: f64,
    pub expected: f64,
    pub gap: f64,
}

pub fn unexpected_return_check(result: &ValuationResult, ug0: f64) -> UnexpectedReturnCheck {
    let expected = ug0 - result.terminal_unrealized.value;
    UnexpectedReturnCheck {
        deflated_total: result.unexpected.value,
        expected,
        gap: result.unexpected.value - expected,
    }
}

/// Valuation of a single contract within a portfolio run.
#[derive(Debug, Clone)]
pub struct ContractValue {
    pub id: String,
    /// The contract's guaranteed flows discounted on the curve.
    pub guaranteed: f64,
    /// Deflated discretionary benefits attributed to the contract.
    pub discretionary: ComponentEstimate,
    pub best_estimate: f64,
}

/// Values each contract separately from the same ledgers. The valuation is
/// linear in the flows, so these sum to the portfolio aggregates.
pub fn per_contract_values(
    portfolio: &Portfolio,
    ledgers: &[ScenarioLedger],
    curve: &DiscountCurve,
) -> Result<Vec<ContractValue>> {
    if ledgers.is_empty() {
        return Err(Error::invalid("no ledgers to value"));
    }
    let n = ledgers.len();
    let mut values = Vec::with_capacity(portfolio.contracts.len());
    for (x, contract) in portfolio.contracts.iter().enumerate() {
        let mut guaranteed = 0.0;
        for (i, &cf) in contract.guaranteed_flows.iter().enumerate() {
            guaranteed += cf * curve.factor(i as u32 + 1)?;
        }
        let mut fdb = vec![0.0; n];
        for ledger in ledgers {
            let total: f64 = ledger
                .rows
                .iter()
                .map(|row| row.deflator * row.discretionary_by_contract[x])
                .sum();
            fdb[ledger.scenario] = total;
        }
        let discretionary = mc_estimate(&fdb);
        values.push(ContractValue {
            id: contract.id.clone(),
            guaranteed,
            best_estimate: guaranteed + discretionary.value,
            discretionary,
        });
    }
    Ok(values)
}

/// Per-scenario deflated discretionary benefits of one contract, indexed
/// by scenario — the sample a dispersion measure of the contract's bonus
/// payout is computed from.
pub fn deflated_discretionary_by_scenario(
    ledgers: &[ScenarioLedger],
    contract_index: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; ledgers.len()];
    for ledger in ledgers {
        out[ledger.scenario] = ledger
            .rows
            .iter()
            .map(|row| row.deflator * row.discretionary_by_contract[contract_index])
            .sum();
    }
    out
}
