#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use runoff_core::alm::{Asset, Bond, Contract, Equity, ManagementRules, Portfolio};
use runoff_core::curves::{DiscountCurve, SpotRateSeries};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

pub fn reference_curve() -> DiscountCurve {
    DiscountCurve::read_csv(data_path("eiopa_rfr_2017.csv")).unwrap()
}

pub fn reference_series() -> SpotRateSeries {
    SpotRateSeries::read_csv(data_path("bund_spot_15y_monthly.csv"), 15).unwrap()
}

pub fn load_portfolio(name: &str) -> Portfolio {
    Portfolio::from_json_file(data_path(name)).unwrap()
}

/// Draws a small with-profit portfolio whose shape keeps the run-off
/// well-behaved: low technical rates, assets booked below market with the
/// guaranteed benefits covered with margin, a small equity allocation, and
/// an opening surplus fund of a few percent of reserves.
pub fn random_portfolio(rng: &mut impl Rng, curve: &DiscountCurve) -> Portfolio {
    let n_contracts = rng.gen_range(1..=3);
    let mut contracts = Vec::with_capacity(n_contracts);
    for i in 0..n_contracts {
        let maturity = rng.gen_range(6..=14u32);
        let technical_rate = rng.gen_range(0..=4) as f64 * 0.0025;
        let annuity = rng.gen_range(0.0..3.0f64);
        let lump = rng.gen_range(30.0..80.0f64);
        let mut guaranteed_flows = vec![annuity; maturity as usize - 1];
        guaranteed_flows.push(lump);
        contracts.push(Contract {
            id: format!("policy-{i}"),
            maturity,
            technical_rate,
            guaranteed_flows,
        });
    }

    let reserve: f64 = contracts.iter().map(|c| c.reserve_path()[0]).sum();
    let final_year = contracts.iter().map(|c| c.maturity).max().unwrap();

    let mut assets = Vec::new();
    let mut booked = 0.0;
    for (i, contract) in contracts.iter().enumerate() {
        let face = contract.guaranteed_flows.last().unwrap() * rng.gen_range(0.85..1.05);
        let maturity =
            (contract.maturity as i64 + rng.gen_range(-2..=2)).clamp(2, final_year as i64 + 5);
        let book_value = face * rng.gen_range(0.92..1.0);
        booked += book_value;
        assets.push(Asset::Bond(Bond {
            id: format!("bond-{i}"),
            face,
            coupon_rate: rng.gen_range(0.01..0.025),
            maturity: maturity as u32,
            book_value,
        }));
    }
    let equity_market = reserve * rng.gen_range(0.04..0.07);
    let equity_book = equity_market * rng.gen_range(0.75..0.95);
    booked += equity_book;
    assets.push(Asset::Equity(Equity {
        id: "stocks".into(),
        market_value: equity_market,
        book_value: equity_book,
        dividend_yield: rng.gen_range(0.01..0.03),
        volatility: 0.05,
    }));

    let mut surplus_fund = reserve * rng.gen_range(0.03..0.08);

    // Keep the opening cash position comfortably positive.
    let cash = reserve + surplus_fund - booked;
    if cash < 0.04 * reserve {
        surplus_fund += 0.04 * reserve - cash;
    }

    let rules = ManagementRules {
        participation_rate: [0.75, 0.8, 0.85, 0.9][rng.gen_range(0..4)],
        ..Default::default()
    };

    let mut portfolio = Portfolio {
        name: None,
        description: None,
        contracts,
        assets,
        surplus_fund,
        rules,
    };

    // Guarantee a 5% asset margin over the curve-discounted benefits, so
    // the guaranteed payments stay fundable across scenarios.
    let gb: f64 = portfolio
        .contracts
        .iter()
        .map(|c| {
            c.guaranteed_flows
                .iter()
                .enumerate()
                .map(|(i, &cf)| cf * curve.factor(i as u32 + 1).unwrap())
                .sum::<f64>()
        })
        .sum();
    let opening = portfolio.opening_balance(curve).unwrap();
    let a0 = opening.market_value;
    if a0 < 1.05 * gb {
        portfolio.surplus_fund += 1.05 * gb - a0;
    }
    portfolio.validate().unwrap();
    portfolio
}

/// Everything the bound-validity property needs to know about one
/// randomized portfolio run.
pub struct ValidityCase {
    pub fdb: runoff_core::valuation::ComponentEstimate,
    /// Weighted lower bound under the provable conventions (full
    /// precision, actual maturity buckets, no surplus-fund deduction).
    pub bound: f64,
    pub gph: f64,
    pub vif: f64,
    pub tax: f64,
    /// Mean over scenarios of the undeflated discretionary payout total.
    pub undeflated_mean: f64,
    /// Largest discount factor up to the portfolio's final year.
    pub max_factor: f64,
    /// Smallest gross surplus over all scenarios and years.
    pub min_gross_surplus: f64,
    pub opening_market: f64,
}

/// Projects `count` randomized portfolios and computes the Monte Carlo
/// valuation next to the weighted lower bound for each.
pub fn bound_validity_sweep(
    count: usize,
    master_seed: u64,
    n_scenarios: usize,
) -> Vec<ValidityCase> {
    use rand::SeedableRng;
    use runoff_core::alm::{project, ProjectionConfig};
    use runoff_core::bound::{weighted_lower_bound, BoundPart};
    use runoff_core::scenarios::{generate, RateModelParams};
    use runoff_core::valuation::{deflated_discretionary_by_scenario, per_contract_values, value};

    let curve = reference_curve();
    let series = reference_series();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(master_seed);

    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let portfolio = random_portfolio(&mut rng, &curve);
        let set = generate(
            &curve,
            &RateModelParams::default(),
            n_scenarios,
            master_seed * 1000 + k as u64,
        )
        .unwrap();
        let ledgers = project(&portfolio, &set, &ProjectionConfig::default()).unwrap();
        let result = value(&ledgers, &curve).unwrap();
        let contracts = per_contract_values(&portfolio, &ledgers, &curve).unwrap();

        let opening = portfolio.opening_balance(&curve).unwrap();
        let a0 = opening.market_value;
        let gb: f64 = contracts.iter().map(|c| c.guaranteed).sum();
        let parts: Vec<BoundPart> = portfolio
            .contracts
            .iter()
            .enumerate()
            .map(|(x, contract)| {
                let samples = deflated_discretionary_by_scenario(&ledgers, x);
                let mean = samples.iter().sum::<f64>() / samples.len() as f64;
                let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (samples.len() - 1) as f64)
                    .sqrt();
                let cov_ph = if mean > 0.0 {
                    (sd / mean).clamp(0.05, 0.5)
                } else {
                    0.5
                };
                BoundPart {
                    a0: a0 * contracts[x].guaranteed / gb,
                    gb: contracts[x].guaranteed,
                    maturity: contract.maturity,
                    cov_ph,
                }
            })
            .collect();

        let final_year = portfolio.final_year();
        let bound = weighted_lower_bound(
            &parts,
            portfolio.rules.participation_rate,
            portfolio.surplus_fund,
            portfolio.surplus_fund / a0,
            final_year,
            &curve,
            &series,
            false,
        )
        .unwrap();

        let mut undeflated = vec![0.0; ledgers.len()];
        let mut min_gs = f64::INFINITY;
        for ledger in &ledgers {
            undeflated[ledger.scenario] = ledger.rows.iter().map(|r| r.cf_discretionary).sum();
            for row in &ledger.rows {
                min_gs = min_gs.min(row.gross_surplus);
            }
        }
        let undeflated_mean = undeflated.iter().sum::<f64>() / undeflated.len() as f64;

        out.push(ValidityCase {
            fdb: result.discretionary,
            bound: bound.value,
            gph: portfolio.rules.participation_rate,
            vif: result.vif.value,
            tax: result.tax.value,
            undeflated_mean,
            max_factor: curve.max_factor(final_year).unwrap(),
            min_gross_surplus: min_gs,
            opening_market: result.opening_market,
        });
    }
    out
}
