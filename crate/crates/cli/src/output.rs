//! Report assembly and file output. Reports are plain text built line by
//! line so that reruns with the same configuration are byte-identical
//! apart from the `generated:` timestamp header.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use runoff_core::alm::ScenarioLedger;
use runoff_core::bound::{LowerBound, SensitivityGrid};
use runoff_core::scenarios::MartingaleReport;
use runoff_core::valuation::{LeakageReport, ValuationResult};

use crate::{Failure, EXIT_INPUT};

/// Rounds half away from zero to one decimal — the presentation precision
/// for values quoted in billions.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// A plain-text report under assembly.
pub struct Report {
    text: String,
}

impl Report {
    /// A report without the title/timestamp header, for single-command
    /// output.
    pub fn bare() -> Report {
        Report {
            text: String::new(),
        }
    }

    pub fn new(title: &str) -> Report {
        let mut text = String::new();
        let _ = writeln!(text, "{title}");
        let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        let _ = writeln!(text, "generated: {now}");
        Report { text }
    }

    pub fn section(&mut self, name: &str) {
        let sep = if self.text.is_empty() { "" } else { "\n" };
        let _ = writeln!(self.text, "{sep}[{name}]");
    }

    pub fn line(&mut self, line: impl AsRef<str>) {
        let _ = writeln!(self.text, "{}", line.as_ref());
    }

    pub fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.text, "{key}: {value}");
    }

    /// Prints the report and, when an output directory is configured,
    /// also writes it there.
    pub fn emit(&self, output_dir: Option<&Path>, filename: &str) -> Result<(), Failure> {
        print!("{}", self.text);
        if let Some(dir) = output_dir {
            write_file(dir, filename, &self.text)?;
        }
        Ok(())
    }
}

pub fn write_file(dir: &Path, filename: &str, content: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure {
        code: EXIT_INPUT,
        message: format!("{}: {e}", dir.display()),
    })?;
    let path = dir.join(filename);
    fs::write(&path, content).map_err(|e| Failure {
        code: EXIT_INPUT,
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(path)
}

pub fn martingale_section(report: &mut Report, martingale: &MartingaleReport) {
    report.line(format!(
        "max deflator error: {:.6e} at t = {} (tolerance {:.1e})",
        martingale.max_rel_error, martingale.worst_tenor, martingale.tolerance
    ));
    report.kv(
        "martingale test",
        if martingale.pass { "pass" } else { "FAIL" },
    );
}

pub fn valuation_section(report: &mut Report, result: &ValuationResult) {
    report.line(format!(
        "opening: book {:.6}  market {:.6}  unrealized {:.6}",
        result.opening_book, result.opening_market, result.opening_unrealized
    ));
    report.line(format!(
        "guaranteed benefits: {:.6} (curve)  {:.6} ± {:.6} (scenarios)",
        result.guaranteed, result.guaranteed_scenario.value, result.guaranteed_scenario.std_error
    ));
    report.line(format!(
        "discretionary benefits: {:.6} ± {:.6}",
        result.discretionary.value, result.discretionary.std_error
    ));
    report.line(format!("best estimate: {:.6}", result.best_estimate));
    report.line(format!(
        "value in force: {:.6} ± {:.6}",
        result.vif.value, result.vif.std_error
    ));
    report.line(format!(
        "tax: {:.6} ± {:.6}",
        result.tax.value, result.tax.std_error
    ));
    report.line(format!(
        "terminal market value: {:.6} ± {:.6}",
        result.terminal.value, result.terminal.std_error
    ));
}

pub fn leakage_section(report: &mut Report, leakage: &LeakageReport) {
    report.line(format!(
        "identity: {:.6} (opening) vs {:.6} (valued)",
        leakage.lhs, leakage.rhs
    ));
    report.line(format!(
        "residual: {:.6e}  relative: {:.6e}  (tolerance {:.1e})",
        leakage.residual, leakage.residual_rel, leakage.tolerance
    ));
    report.kv("leakage test", if leakage.pass { "pass" } else { "FAIL" });
}

pub fn bound_section(report: &mut Report, bound: &LowerBound, reported_fdb: Option<f64>) {
    report.kv(
        "mode",
        match bound.mode {
            runoff_core::bound::BoundMode::Rounded => "rounded",
            runoff_core::bound::BoundMode::Exact => "exact",
        },
    );
    report.line(format!(
        "anchor factor: {:.6}  deflator cov: {:.6}  max factor: {:.6}",
        bound.anchor_factor, bound.cov_b, bound.max_discount_factor
    ));
    report.line(format!(
        "eta: {:.6}  depreciation: {:.6}",
        bound.eta, bound.depreciation
    ));
    report.line(format!(
        "LB1: {:.6}  surplus deduction: {:.6}  cross-financing: {:.6}",
        bound.lb1, bound.surplus_deduction, bound.cross_financing
    ));
    report.line(format!("lower bound: {:.6}", bound.value));
    report.line(format!(
        "headline: {:.1} - {:.1} - {:.1} = {:.1}",
        round1(bound.lb1),
        round1(bound.surplus_deduction),
        round1(bound.cross_financing),
        round1(bound.lb1) - round1(bound.surplus_deduction) - round1(bound.cross_financing)
    ));
    if let Some(reported) = reported_fdb {
        report.line(format!(
            "reported FDB: {:.6}  ({:.1})",
            reported,
            round1(reported)
        ));
        report.kv(
            "bound check",
            if bound.value <= reported {
                "pass (reported FDB at or above its lower bound)"
            } else {
                "FAIL (reported FDB below its lower bound)"
            },
        );
    }
}

pub fn grid_tables(report: &mut Report, grid: &SensitivityGrid) {
    let mut ms: Vec<u32> = grid.cells.iter().map(|c| c.m).collect();
    ms.dedup();
    let mut gphs: Vec<f64> = grid.cells.iter().map(|c| c.gph).collect();
    gphs.sort_by(f64::total_cmp);
    gphs.dedup();
    let mut c0s: Vec<f64> = grid.cells.iter().map(|c| c.c0).collect();
    c0s.sort_by(f64::total_cmp);
    c0s.dedup();

    for &m in &ms {
        report.line(format!("lower bound, M = {m}"));
        let mut header = format!("{:>10}", "");
        for &gph in &gphs {
            header.push_str(&format!("  {:>10}", format!("gph={gph}")));
        }
        report.line(header);
        for &c0 in &c0s {
            let mut row = format!("{:>10}", format!("C0={c0}"));
            for &gph in &gphs {
                let cell = grid
                    .cells
                    .iter()
                    .find(|c| c.m == m && c.gph == gph && c.c0 == c0)
                    .expect("complete grid");
                row.push_str(&format!("  {:>10.1}", round1(cell.value)));
            }
            report.line(row);
        }
        report.line("");
    }

    report.line("cross-financing term F");
    let mut header = format!("{:>10}", "");
    for &c0 in &c0s {
        header.push_str(&format!("  {:>10}", format!("C0={c0}")));
    }
    report.line(header);
    for &gph in &gphs {
        let mut row = format!("{:>10}", format!("gph={gph}"));
        for &c0 in &c0s {
            let cell = grid
                .cross_financing
                .iter()
                .find(|c| c.gph == gph && c.c0 == c0)
                .expect("complete grid");
            row.push_str(&format!("  {:>10.1}", round1(cell.value)));
        }
        report.line(row);
    }
}

pub fn grid_csv(grid: &SensitivityGrid) -> (String, String) {
    let mut lb = String::from("m,gph,c0,lower_bound\n");
    for cell in &grid.cells {
        let _ = writeln!(lb, "{},{},{},{:.6}", cell.m, cell.gph, cell.c0, cell.value);
    }
    let mut f = String::from("gph,c0,cross_financing\n");
    for cell in &grid.cross_financing {
        let _ = writeln!(f, "{},{},{:.6}", cell.gph, cell.c0, cell.value);
    }
    (lb, f)
}

/// Ledger dump in `scenario,year,field,value` layout. Scalar fields use
/// their own names; per-contract discretionary flows are emitted as
/// `discretionary.<contract-id>`.
pub fn ledger_csv(ledgers: &[ScenarioLedger], contract_ids: &[String]) -> String {
    let mut out = String::from("scenario,year,field,value\n");
    let mut push = |scenario: usize, year: u32, field: &str, value: f64| {
        let _ = writeln!(out, "{scenario},{year},{field},{value}");
    };
    for ledger in ledgers {
        for row in &ledger.rows {
            push(ledger.scenario, row.year, "deflator", row.deflator);
            push(
                ledger.scenario,
                row.year,
                "prior_forward",
                row.prior_forward,
            );
            push(
                ledger.scenario,
                row.year,
                "cf_guaranteed",
                row.cf_guaranteed,
            );
            push(
                ledger.scenario,
                row.year,
                "cf_discretionary",
                row.cf_discretionary,
            );
            for (i, id) in contract_ids.iter().enumerate() {
                push(
                    ledger.scenario,
                    row.year,
                    &format!("discretionary.{id}"),
                    row.discretionary_by_contract[i],
                );
            }
            push(
                ledger.scenario,
                row.year,
                "gross_surplus",
                row.gross_surplus,
            );
            push(ledger.scenario, row.year, "ph_star", row.ph_star);
            push(ledger.scenario, row.year, "tax", row.tax);
            push(ledger.scenario, row.year, "shareholder", row.shareholder);
            push(
                ledger.scenario,
                row.year,
                "cash_interest",
                row.cash_interest,
            );
            push(ledger.scenario, row.year, "coupons", row.coupons);
            push(ledger.scenario, row.year, "dividends", row.dividends);
            push(ledger.scenario, row.year, "amortization", row.amortization);
            push(
                ledger.scenario,
                row.year,
                "realized_gains",
                row.realized_gains,
            );
            push(ledger.scenario, row.year, "write_downs", row.write_downs);
            push(
                ledger.scenario,
                row.year,
                "return_on_assets",
                row.return_on_assets,
            );
            push(
                ledger.scenario,
                row.year,
                "unexpected_return",
                row.unexpected_return,
            );
            push(
                ledger.scenario,
                row.year,
                "guaranteed_reserve",
                row.guaranteed_reserve,
            );
            push(ledger.scenario, row.year, "surplus_fund", row.surplus_fund);
            push(ledger.scenario, row.year, "book_value", row.book_value);
            push(ledger.scenario, row.year, "market_value", row.market_value);
            push(
                ledger.scenario,
                row.year,
                "unrealized_gains",
                row.unrealized_gains,
            );
        }
    }
    out
}
