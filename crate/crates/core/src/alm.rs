//! Asset–liability projection of a closed with-profit portfolio.
//!
//! The engine rolls a simplified insurance balance sheet forward one year at
//! a time along each scenario. Assets (cash, coupon bonds, equity) earn the
//! scenario's returns; liabilities are the guaranteed reserve of the
//! contracts plus a surplus fund that buffers the policyholders' share of
//! the gross surplus before it is declared. Every year:
//!
//! 1. cash earns the prior year's one-year rate, bonds pay coupons and
//!    redeem at face, equity earns the risk-neutral total return and pays
//!    its dividend;
//! 2. bond book values accrete linearly towards face, assets are marked to
//!    the scenario's conditional prices, and book values above market are
//!    written down (strict lower-of-cost-or-market);
//! 3. guaranteed benefits are paid; if cash runs dry, assets are sold pro
//!    rata at market, realizing their unrealized gains — if even a full
//!    liquidation cannot fund the guaranteed benefits the scenario is
//!    insolvent and the projection aborts;
//! 4. the gross surplus — asset income minus the technical interest
//!    credited to the reserves — is split between policyholders (at the
//!    participation rate, on profits only), tax, and shareholders, who also
//!    absorb losses;
//! 5. the policyholder share enters the surplus fund, and the fund pays out
//!    its annual release plus everything above the cap as discretionary
//!    benefits, attributed to contracts in proportion to their
//!    start-of-year reserves;
//! 6. remaining cash is swept into a par coupon bond.
//!
//! In the final year the whole asset side is liquidated instead of step 6,
//! and the cap (zero remaining reserve) forces the surplus fund to pay out
//! in full, so the terminal balance sheet is empty. Book value is conserved
//! exactly: the asset book equals reserves plus surplus fund after every
//! step, and the year-on-year book movement decomposes into cash flows,
//! shareholder transfer, tax, and asset return with no residual beyond
//! round-off.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::DiscountCurve;
use crate::error::{Error, Result};
use crate::scenarios::{equity_rng, ScenarioSet};

/// One with-profit contract: a deterministic guaranteed benefit schedule
/// and the technical rate its reserve accrues at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contract {
    pub id: String,
    /// Year of the last guaranteed payment; the schedule has this length.
    pub maturity: u32,
    /// First-order (pricing) interest rate of the contract.
    pub technical_rate: f64,
    /// Guaranteed benefit paid at the end of year `t` is entry `t-1`.
    pub guaranteed_flows: Vec<f64>,
}

impl Contract {
    pub fn validate(&self) -> Result<()> {
        if self.maturity == 0 {
            return Err(Error::invalid(format!(
                "contract {}: maturity must be at least 1",
                self.id
            )));
        }
        if self.guaranteed_flows.len() != self.maturity as usize {
            return Err(Error::invalid(format!(
                "contract {}: {} guaranteed flows but maturity {}",
                self.id,
                self.guaranteed_flows.len(),
                self.maturity
            )));
        }
        if !self.technical_rate.is_finite() || self.technical_rate <= -1.0 {
            return Err(Error::invalid(format!(
                "contract {}: technical rate {} must be finite and exceed -1",
                self.id, self.technical_rate
            )));
        }
        for (t, &cf) in self.guaranteed_flows.iter().enumerate() {
            if !cf.is_finite() || cf < 0.0 {
                return Err(Error::invalid(format!(
                    "contract {}: guaranteed flow {} in year {} must be non-negative",
                    self.id,
                    cf,
                    t + 1
                )));
            }
        }
        if *self.guaranteed_flows.last().unwrap() <= 0.0 {
            return Err(Error::invalid(format!(
                "contract {}: final guaranteed flow must be positive",
                self.id
            )));
        }
        Ok(())
    }

    /// Guaranteed reserve path `[TR(0), …, TR(maturity)]` from the backward
    /// recursion `TR(t-1) = (TR(t) + cf_t)/(1 + i)`, `TR(maturity) = 0`.
    pub fn reserve_path(&self) -> Vec<f64> {
        let m = self.maturity as usize;
        let mut tr = vec![0.0; m + 1];
        for t in (1..=m).rev() {
            tr[t - 1] = (tr[t] + self.guaranteed_flows[t - 1]) / (1.0 + self.technical_rate);
        }
        tr
    }
}

/// Annual-coupon bullet bond held at amortized cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bond {
    pub id: String,
    pub face: f64,
    pub coupon_rate: f64,
    /// Redemption year, counted like contract maturities.
    pub maturity: u32,
    pub book_value: f64,
}

/// Equity position held at cost; the dividend is a fixed fraction of the
/// cum-dividend market value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Equity {
    pub id: String,
    pub market_value: f64,
    pub book_value: f64,
    pub dividend_yield: f64,
    pub volatility: f64,
}

/// An initial asset holding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Asset {
    Bond(Bond),
    Equity(Equity),
}

impl Asset {
    pub fn id(&self) -> &str {
        match self {
            Asset::Bond(b) => &b.id,
            Asset::Equity(e) => &e.id,
        }
    }

    pub fn book_value(&self) -> f64 {
        match self {
            Asset::Bond(b) => b.book_value,
            Asset::Equity(e) => e.book_value,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Asset::Bond(b) => {
                if !(b.face > 0.0) || !b.face.is_finite() {
                    return Err(Error::invalid(format!(
                        "bond {}: face {} must be positive",
                        b.id, b.face
                    )));
                }
                if !b.coupon_rate.is_finite() || b.coupon_rate < 0.0 {
                    return Err(Error::invalid(format!(
                        "bond {}: coupon rate {} must be non-negative",
                        b.id, b.coupon_rate
                    )));
                }
                if b.maturity == 0 {
                    return Err(Error::invalid(format!(
                        "bond {}: maturity must be at least 1",
                        b.id
                    )));
                }
                if !(b.book_value > 0.0) || !b.book_value.is_finite() {
                    return Err(Error::invalid(format!(
                        "bond {}: book value {} must be positive",
                        b.id, b.book_value
                    )));
                }
            }
            Asset::Equity(e) => {
                if !(e.market_value > 0.0) || !e.market_value.is_finite() {
                    return Err(Error::invalid(format!(
                        "equity {}: market value {} must be positive",
                        e.id, e.market_value
                    )));
                }
                if !(e.book_value > 0.0) || !e.book_value.is_finite() {
                    return Err(Error::invalid(format!(
                        "equity {}: book value {} must be positive",
                        e.id, e.book_value
                    )));
                }
                if !e.dividend_yield.is_finite() || !(0.0..1.0).contains(&e.dividend_yield) {
                    return Err(Error::invalid(format!(
                        "equity {}: dividend yield {} must lie in [0, 1)",
                        e.id, e.dividend_yield
                    )));
                }
                if !e.volatility.is_finite() || e.volatility < 0.0 {
                    return Err(Error::invalid(format!(
                        "equity {}: volatility {} must be non-negative",
                        e.id, e.volatility
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Profit-sharing and investment rules of the office.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManagementRules {
    /// Policyholder share of a positive gross surplus, in `[0, 1)`.
    pub participation_rate: f64,
    /// Tax rate on the shareholder-side surplus after participation.
    #[serde(default = "default_tax_rate")]
    pub tax_rate: f64,
    /// The surplus fund may retain at most this multiple of the guaranteed
    /// reserve; everything above is declared immediately.
    #[serde(default = "default_sf_cap_ratio")]
    pub sf_cap_ratio: f64,
    /// Fraction of the surplus fund declared every year regardless of the cap.
    #[serde(default = "default_sf_release_rate")]
    pub sf_release_rate: f64,
    /// Target maturity in years for reinvestment of surplus cash.
    #[serde(default = "default_reinvest_maturity")]
    pub reinvest_maturity: u32,
}

fn default_tax_rate() -> f64 {
    0.25
}

fn default_sf_cap_ratio() -> f64 {
    0.10
}

fn default_sf_release_rate() -> f64 {
    0.15
}

fn default_reinvest_maturity() -> u32 {
    5
}

impl Default for ManagementRules {
    /// 80% participation with the statutory default rates.
    fn default() -> Self {
        ManagementRules {
            participation_rate: 0.8,
            tax_rate: default_tax_rate(),
            sf_cap_ratio: default_sf_cap_ratio(),
            sf_release_rate: default_sf_release_rate(),
            reinvest_maturity: default_reinvest_maturity(),
        }
    }
}

impl ManagementRules {
    pub fn validate(&self) -> Result<()> {
        if !self.participation_rate.is_finite() || !(0.0..1.0).contains(&self.participation_rate) {
            return Err(Error::invalid(format!(
                "participation rate {} must lie in [0, 1)",
                self.participation_rate
            )));
        }
        if !self.tax_rate.is_finite() || !(0.0..1.0).contains(&self.tax_rate) {
            return Err(Error::invalid(format!(
                "tax rate {} must lie in [0, 1)",
                self.tax_rate
            )));
        }
        if !(self.sf_cap_ratio > 0.0) || !self.sf_cap_ratio.is_finite() {
            return Err(Error::invalid(format!(
                "surplus fund cap ratio {} must be positive",
                self.sf_cap_ratio
            )));
        }
        if !self.sf_release_rate.is_finite() || !(0.0..=1.0).contains(&self.sf_release_rate) {
            return Err(Error::invalid(format!(
                "surplus fund release rate {} must lie in [0, 1]",
                self.sf_release_rate
            )));
        }
        if self.reinvest_maturity == 0 {
            return Err(Error::invalid("reinvestment maturity must be at least 1"));
        }
        Ok(())
    }
}

/// A closed portfolio: contracts, initial assets, the balance of the
/// surplus fund, and the management rules. The cash position is implied:
/// the asset book must equal the liability book at time 0, so cash is the
/// liability book minus the booked assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Portfolio {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub contracts: Vec<Contract>,
    #[serde(default)]
    pub assets: Vec<Asset>,
    pub surplus_fund: f64,
    pub rules: ManagementRules,
}

/// The time-0 balance sheet implied by a portfolio and a discount curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpeningBalance {
    /// Total asset (= liability) book value.
    pub book_value: f64,
    /// Market value of the assets, with cash at par and bonds priced on the
    /// curve.
    pub market_value: f64,
    pub cash: f64,
    pub guaranteed_reserve: f64,
    pub surplus_fund: f64,
    /// `market_value − book_value`.
    pub unrealized_gains: f64,
}

impl Portfolio {
    pub fn validate(&self) -> Result<()> {
        if self.contracts.is_empty() {
            return Err(Error::invalid("portfolio has no contracts"));
        }
        let mut contract_ids: Vec<&str> = self.contracts.iter().map(|c| c.id.as_str()).collect();
        contract_ids.sort_unstable();
        if contract_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate contract id"));
        }
        for c in &self.contracts {
            c.validate()?;
        }
        let mut asset_ids: Vec<&str> = self.assets.iter().map(|a| a.id()).collect();
        asset_ids.sort_unstable();
        if asset_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate asset id"));
        }
        for a in &self.assets {
            a.validate()?;
        }
        if !self.surplus_fund.is_finite() || self.surplus_fund < 0.0 {
            return Err(Error::invalid(format!(
                "surplus fund {} must be non-negative",
                self.surplus_fund
            )));
        }
        self.rules.validate()
    }

    pub fn from_json_str(text: &str) -> Result<Portfolio> {
        let portfolio: Portfolio =
            serde_json::from_str(text).map_err(|e| Error::json(Path::new("<inline>"), e))?;
        portfolio.validate()?;
        Ok(portfolio)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Portfolio> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let portfolio: Portfolio = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        portfolio.validate()?;
        Ok(portfolio)
    }

    /// Year of the last guaranteed payment across all contracts — the
    /// natural projection horizon.
    pub fn final_year(&self) -> u32 {
        self.contracts.iter().map(|c| c.maturity).max().unwrap_or(0)
    }

    /// Total guaranteed benefit due at the end of year `t`.
    pub fn guaranteed_flow(&self, t: u32) -> f64 {
        self.contracts
            .iter()
            .filter(|c| t >= 1 && t <= c.maturity)
            .map(|c| c.guaranteed_flows[(t - 1) as usize])
            .sum()
    }

    /// The implied time-0 balance sheet. Bond market values come from the
    /// curve, so every bond maturity must lie within its horizon.
    pub fn opening_balance(&self, curve: &DiscountCurve) -> Result<OpeningBalance> {
        let guaranteed_reserve: f64 = self.contracts.iter().map(|c| c.reserve_path()[0]).sum();
        let book_value = guaranteed_reserve + self.surplus_fund;
        let booked_assets: f64 = self.assets.iter().map(Asset::book_value).sum();
        let cash = book_value - booked_assets;

        let mut market_value = cash;
        for asset in &self.assets {
            market_value += match asset {
                Asset::Bond(b) => {
                    let mut pv = b.face * curve.factor(b.maturity)?;
                    for u in 1..=b.maturity {
                        pv += b.face * b.coupon_rate * curve.factor(u)?;
                    }
                    pv
                }
                Asset::Equity(e) => e.market_value,
            };
        }
        Ok(OpeningBalance {
            book_value,
            market_value,
            cash,
            guaranteed_reserve,
            surplus_fund: self.surplus_fund,
            unrealized_gains: market_value - book_value,
        })
    }
}

/// Three-way split of a year's gross surplus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurplusSplit {
    pub ph_star: f64,
    pub tax: f64,
    pub shareholder: f64,
}

/// Splits the gross surplus: policyholders receive their participation
/// share of profits (never of losses), the remainder is taxed, and the
/// shareholder keeps the rest — including the whole of any loss.
pub fn declare_split(gross_surplus: f64, rules: &ManagementRules) -> SurplusSplit {
    let ph_star = rules.participation_rate * gross_surplus.max(0.0);
    let tax = rules.tax_rate * (gross_surplus - ph_star).max(0.0);
    SurplusSplit {
        ph_star,
        tax,
        shareholder: gross_surplus - ph_star - tax,
    }
}

/// Strict lower-of-cost-or-market: returns the new book value and the
/// write-down charged to the year's asset return.
pub fn apply_locm(book_value: f64, market_value: f64) -> (f64, f64) {
    let new_book = book_value.min(market_value);
    (new_book, book_value - new_book)
}

/// Amount the surplus fund declares this year: the regular release plus
/// everything above the cap of `sf_cap_ratio` times the guaranteed reserve.
/// With no reserve left the fund pays out in full.
pub fn enforce_sf_cap(surplus_fund: f64, guaranteed_reserve: f64, rules: &ManagementRules) -> f64 {
    let release = rules.sf_release_rate * surplus_fund;
    let excess = (surplus_fund - release - rules.sf_cap_ratio * guaranteed_reserve).max(0.0);
    release + excess
}

/// The year's asset return in excess of the risk-free return on the prior
/// book value.
pub fn unexpected_return(return_on_assets: f64, prior_forward: f64, prior_book_value: f64) -> f64 {
    return_on_assets - prior_forward * prior_book_value
}

/// Options of a projection run.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProjectionConfig {
    /// Fault injection: the guaranteed benefits of this year are paid but
    /// omitted from the recorded ledger, so downstream valuation must flag
    /// the gap.
    pub drop_cashflow_year: Option<u32>,
}

/// One projected year of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub year: u32,
    /// `B_t^{-1}` of the scenario.
    pub deflator: f64,
    /// `F_{t-1}`, the rate earned over this year.
    pub prior_forward: f64,
    pub cf_guaranteed: f64,
    pub cf_discretionary: f64,
    /// Discretionary benefit attributed to each contract, in portfolio
    /// order; sums to `cf_discretionary`.
    pub discretionary_by_contract: Vec<f64>,
    pub gross_surplus: f64,
    pub ph_star: f64,
    pub tax: f64,
    pub shareholder: f64,
    pub cash_interest: f64,
    pub coupons: f64,
    pub dividends: f64,
    pub amortization: f64,
    pub realized_gains: f64,
    pub write_downs: f64,
    /// Total asset return on book values:
    /// `cash_interest + coupons + dividends + amortization + realized_gains − write_downs`.
    pub return_on_assets: f64,
    pub unexpected_return: f64,
    pub guaranteed_reserve: f64,
    pub surplus_fund: f64,
    /// End-of-year asset book value; equals reserve plus surplus fund.
    pub book_value: f64,
    /// End-of-year asset market value.
    pub market_value: f64,
    pub unrealized_gains: f64,
}

/// Full ledger of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioLedger {
    pub scenario: usize,
    pub opening_book: f64,
    pub opening_market: f64,
    pub opening_reserve: f64,
    pub opening_surplus_fund: f64,
    /// Rows for years `1..=final_year` in order.
    pub rows: Vec<LedgerRow>,
}

impl ScenarioLedger {
    pub fn row(&self, year: u32) -> &LedgerRow {
        &self.rows[(year - 1) as usize]
    }

    pub fn final_year(&self) -> u32 {
        self.rows.len() as u32
    }
}

/// Liability quantities shared by every scenario.
struct LiabilitySchedule {
    final_year: u32,
    /// `flows[t]` is the guaranteed benefit due at year `t` (index 0 unused).
    flows: Vec<f64>,
    /// `reserve[t]` is the total guaranteed reserve after year `t`.
    reserve: Vec<f64>,
    /// `credit[t]` is the technical interest credited during year `t`.
    credit: Vec<f64>,
    /// `by_contract[x][t]` is contract `x`'s reserve after year `t`
    /// (zero past its maturity).
    by_contract: Vec<Vec<f64>>,
}

fn liability_schedule(portfolio: &Portfolio) -> LiabilitySchedule {
    let final_year = portfolio.final_year();
    let horizon = final_year as usize;
    let mut by_contract = Vec::with_capacity(portfolio.contracts.len());
    for c in &portfolio.contracts {
        let mut path = c.reserve_path();
        path.resize(horizon + 1, 0.0);
        by_contract.push(path);
    }
    let mut flows = vec![0.0; horizon + 1];
    let mut reserve = vec![0.0; horizon + 1];
    let mut credit = vec![0.0; horizon + 1];
    for t in 0..=horizon {
        reserve[t] = by_contract.iter().map(|p| p[t]).sum();
    }
    for t in 1..=horizon {
        flows[t] = portfolio.guaranteed_flow(t as u32);
        credit[t] = portfolio
            .contracts
            .iter()
            .zip(&by_contract)
            .map(|(c, p)| p[t - 1] * c.technical_rate)
            .sum();
    }
    LiabilitySchedule {
        final_year,
        flows,
        reserve,
        credit,
        by_contract,
    }
}

struct BondState {
    face: f64,
    coupon_rate: f64,
    maturity: u32,
    book: f64,
    anchor_year: u32,
    anchor_book: f64,
    /// Latest mark; kept in sync with partial sales.
    market: f64,
}

impl BondState {
    /// Book value on the straight line from the anchor to face at maturity.
    fn amortized_book(&self, year: u32) -> f64 {
        let remaining = (self.maturity - year) as f64;
        let span = (self.maturity - self.anchor_year) as f64;
        self.face + (self.anchor_book - self.face) * remaining / span
    }
}

struct EquityState {
    market: f64,
    book: f64,
    dividend_yield: f64,
    volatility: f64,
}

/// Projects every scenario of `set` and returns one ledger per scenario,
/// in scenario order. Fails on the first insolvent scenario.
pub fn project(
    portfolio: &Portfolio,
    set: &ScenarioSet,
    config: &ProjectionConfig,
) -> Result<Vec<ScenarioLedger>> {
    portfolio.validate()?;
    if !set.has_model() {
        return Err(Error::invalid(
            "scenario set carries no rate model; attach one before projecting",
        ));
    }
    let schedule = liability_schedule(portfolio);
    if schedule.final_year > set.horizon() {
        return Err(Error::OutOfHorizon {
            argument: schedule.final_year,
            horizon: set.horizon(),
        });
    }
    for asset in &portfolio.assets {
        if let Asset::Bond(b) = asset {
            if b.maturity > set.horizon() {
                return Err(Error::OutOfHorizon {
                    argument: b.maturity,
                    horizon: set.horizon(),
                });
            }
        }
    }
    if let Some(year) = config.drop_cashflow_year {
        if year == 0 || year > schedule.final_year {
            return Err(Error::invalid(format!(
                "cannot drop year {year}: projection runs over years 1..={}",
                schedule.final_year
            )));
        }
    }

    let opening = portfolio.opening_balance(&opening_curve(set)?)?;
    (0..set.n_scenarios())
        .into_par_iter()
        .map(|s| run_scenario(portfolio, set, &schedule, &opening, config, s))
        .collect()
}

/// Time-0 curve implied by the scenario set's own pricing model.
fn opening_curve(set: &ScenarioSet) -> Result<DiscountCurve> {
    let factors: Vec<f64> = (1..=set.horizon())
        .map(|u| set.zero_price(0, 0, u))
        .collect::<Result<_>>()?;
    DiscountCurve::from_factors(factors)
}

#[allow(clippy::too_many_lines)]
fn run_scenario(
    portfolio: &Portfolio,
    set: &ScenarioSet,
    schedule: &LiabilitySchedule,
    opening: &OpeningBalance,
    config: &ProjectionConfig,
    s: usize,
) -> Result<ScenarioLedger> {
    let path = set.path(s);
    let final_year = schedule.final_year;
    let n_contracts = portfolio.contracts.len();

    let mut bonds: Vec<BondState> = Vec::new();
    let mut equities: Vec<EquityState> = Vec::new();
    for asset in &portfolio.assets {
        match asset {
            Asset::Bond(b) => bonds.push(BondState {
                face: b.face,
                coupon_rate: b.coupon_rate,
                maturity: b.maturity,
                book: b.book_value,
                anchor_year: 0,
                anchor_book: b.book_value,
                market: 0.0,
            }),
            Asset::Equity(e) => equities.push(EquityState {
                market: e.market_value,
                book: e.book_value,
                dividend_yield: e.dividend_yield,
                volatility: e.volatility,
            }),
        }
    }

    // Both members of an antithetic pair read the same equity shock stream;
    // the odd member flips the sign, matching the rate innovations.
    let shocks: Vec<Vec<f64>> = {
        let mut rng = equity_rng(set.seed(), s / 2);
        let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
        (0..final_year)
            .map(|_| {
                (0..equities.len())
                    .map(|_| sign * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect()
    };

    let mut cash = opening.cash;
    let mut surplus_fund = portfolio.surplus_fund;
    let mut prior_book = opening.book_value;
    let mut rows = Vec::with_capacity(final_year as usize);

    for t in 1..=final_year {
        let f_prev = path.forward(t - 1);

        // Asset income.
        let cash_interest = cash * f_prev;
        cash += cash_interest;

        let mut coupons = 0.0;
        let mut amortization = 0.0;
        for b in &mut bonds {
            coupons += b.face * b.coupon_rate;
            let accreted = b.amortized_book(t);
            amortization += accreted - b.book;
            b.book = accreted;
        }
        cash += coupons;
        // Redemption at face; amortization has brought the book there.
        for b in bonds.iter().filter(|b| b.maturity == t) {
            cash += b.face;
        }
        bonds.retain(|b| b.maturity > t);

        let mut dividends = 0.0;
        for (e, &z) in equities.iter_mut().zip(&shocks[(t - 1) as usize]) {
            let sigma = e.volatility;
            let cum = e.market * (1.0 + f_prev) * (sigma * z - sigma * sigma / 2.0).exp();
            if !cum.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("equity value in scenario {s}, year {t}"),
                });
            }
            let dividend = e.dividend_yield * cum;
            dividends += dividend;
            e.market = cum - dividend;
        }
        cash += dividends;

        // Mark to the scenario's conditional prices.
        for b in &mut bonds {
            let mut pv = b.face * set.zero_price(s, t, b.maturity)?;
            for u in (t + 1)..=b.maturity {
                pv += b.face * b.coupon_rate * set.zero_price(s, t, u)?;
            }
            b.market = pv;
        }

        let mut realized_gains = 0.0;
        let mut write_downs = 0.0;
        if t == final_year {
            // Terminal liquidation: everything is sold at market.
            for b in &bonds {
                cash += b.market;
                realized_gains += b.market - b.book;
            }
            bonds.clear();
            for e in &equities {
                cash += e.market;
                realized_gains += e.market - e.book;
            }
            equities.clear();
        } else {
            for b in &mut bonds {
                let (book, wd) = apply_locm(b.book, b.market);
                if wd > 0.0 {
                    b.book = book;
                    b.anchor_year = t;
                    b.anchor_book = book;
                    write_downs += wd;
                }
            }
            for e in &mut equities {
                let (book, wd) = apply_locm(e.book, e.market);
                e.book = book;
                write_downs += wd;
            }
        }

        // Guaranteed benefits are paid in full; a cash shortfall forces a
        // pro-rata sale at market. Failure to fund them is insolvency.
        let cf_paid = schedule.flows[t as usize];
        cash -= cf_paid;
        if cash < 0.0 {
            let need = -cash;
            let sellable: f64 = bonds.iter().map(|b| b.market).sum::<f64>()
                + equities.iter().map(|e| e.market).sum::<f64>();
            if sellable < need {
                return Err(Error::Insolvent {
                    scenario: s,
                    year: t,
                    market_value: sellable - need,
                });
            }
            let fraction = need / sellable;
            let keep = 1.0 - fraction;
            for b in &mut bonds {
                cash += fraction * b.market;
                realized_gains += fraction * (b.market - b.book);
                b.face *= keep;
                b.book *= keep;
                b.anchor_book *= keep;
                b.market *= keep;
            }
            for e in &mut equities {
                cash += fraction * e.market;
                realized_gains += fraction * (e.market - e.book);
                e.market *= keep;
                e.book *= keep;
            }
        }

        let return_on_assets =
            cash_interest + coupons + dividends + amortization + realized_gains - write_downs;
        let gross_surplus = return_on_assets - schedule.credit[t as usize];
        let split = declare_split(gross_surplus, &portfolio.rules);
        cash -= split.shareholder + split.tax;

        surplus_fund += split.ph_star;
        let declared = enforce_sf_cap(surplus_fund, schedule.reserve[t as usize], &portfolio.rules);
        surplus_fund -= declared;
        let prior_reserve = schedule.reserve[(t - 1) as usize];
        let mut discretionary_by_contract = vec![0.0; n_contracts];
        for (x, share) in discretionary_by_contract.iter_mut().enumerate() {
            *share = declared * schedule.by_contract[x][(t - 1) as usize] / prior_reserve;
        }
        let cf_discretionary: f64 = discretionary_by_contract.iter().sum();
        cash -= cf_discretionary;

        // Sweep surplus cash into a par coupon bond maturing inside the
        // projection.
        if t < final_year && cash > 0.0 {
            let maturity = t + portfolio.rules.reinvest_maturity.min(final_year - t);
            let coupon_rate = set.par_rate(s, t, maturity - t)?;
            bonds.push(BondState {
                face: cash,
                coupon_rate,
                maturity,
                book: cash,
                anchor_year: t,
                anchor_book: cash,
                market: cash,
            });
            cash = 0.0;
        }

        let book_value = cash
            + bonds.iter().map(|b| b.book).sum::<f64>()
            + equities.iter().map(|e| e.book).sum::<f64>();
        let market_value = cash
            + bonds.iter().map(|b| b.market).sum::<f64>()
            + equities.iter().map(|e| e.market).sum::<f64>();
        if !book_value.is_finite() || !market_value.is_finite() {
            return Err(Error::NonFinite {
                context: format!("balance sheet of scenario {s}, year {t}"),
            });
        }

        let cf_guaranteed = if config.drop_cashflow_year == Some(t) {
            0.0
        } else {
            cf_paid
        };
        rows.push(LedgerRow {
            year: t,
            deflator: path.deflator(t),
            prior_forward: f_prev,
            cf_guaranteed,
            cf_discretionary,
            discretionary_by_contract,
            gross_surplus,
            ph_star: split.ph_star,
            tax: split.tax,
            shareholder: split.shareholder,
            cash_interest,
            coupons,
            dividends,
            amortization,
            realized_gains,
            write_downs,
            return_on_assets,
            unexpected_return: unexpected_return(return_on_assets, f_prev, prior_book),
            guaranteed_reserve: schedule.reserve[t as usize],
            surplus_fund,
            book_value,
            market_value,
            unrealized_gains: market_value - book_value,
        });
        prior_book = book_value;
    }

    Ok(ScenarioLedger {
        scenario: s,
        opening_book: opening.book_value,
        opening_market: opening.market_value,
        opening_reserve: opening.guaranteed_reserve,
        opening_surplus_fund: opening.surplus_fund,
        rows,
    })
}
