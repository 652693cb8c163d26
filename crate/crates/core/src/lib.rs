//! Run-off valuation laboratory for with-profit life insurance portfolios.
//!
//! The crate covers the chain from market data to a validated balance-sheet
//! valuation and an analytic floor on the value of discretionary benefits:
//!
//! - [`curves`]: initial term structure, one-year forward bootstrap, bank
//!   account, and deflator-dispersion statistics from historical spot series;
//! - [`scenarios`]: arbitrage-free Gaussian short-rate scenarios fitted
//!   exactly to the initial curve, with martingale diagnostics;
//! - [`alm`]: statutory projection of assets and liabilities under run-off
//!   management rules, emitting conservation-checked cash-flow ledgers;
//! - [`valuation`]: Monte Carlo estimators of the liability components
//!   (guaranteed, discretionary, shareholder, tax) and the leakage test that
//!   certifies the projection loses no value and prices no arbitrage;
//! - [`bound`]: a lower bound on future discretionary benefits computable
//!   from public balance-sheet figures alone, with sensitivity grids.
//!
//! Amounts are `f64` in billions of currency units; rounding happens only at
//! presentation. All aggregates over scenarios reduce in a fixed order, so
//! results are bit-reproducible across runs and thread counts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alm;
pub mod bound;
pub mod curves;
pub mod error;
pub mod scenarios;
mod util;
pub mod valuation;

pub use error::{Error, Result};
