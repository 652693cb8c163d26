//! Analytic lower bound for the value of future discretionary benefits.
//!
//! A with-profit insurer must pass the participation share `gph` of its
//! gross surplus on to policyholders. Eventually every asset euro not
//! explicitly owed as a guaranteed benefit is therefore realized as
//! surplus and shared — which bounds the value of future discretionary
//! benefits from below using balance-sheet figures alone, without any
//! cash-flow model. The bound multiplies the surplus cover `A0 − GB`
//! (market value of assets backing the business minus the value of
//! guaranteed benefits) by a depreciation factor
//!
//! ```text
//! D = η/(1 + η),   η = P(0,M)·(1 − cov_B·cov_ph)·gph/(1 − gph),
//! ```
//!
//! where `M` is the anchor maturity at which the surplus is assumed to be
//! realized, `cov_B` the coefficient of variation of the `M`-year deflator,
//! and `cov_ph` that of the accumulated policyholder share. Two deductions
//! make the bound safe: the opening surplus fund (already counted in the
//! liability it bounds) and a cross-financing allowance `F` for surplus
//! that earlier generations of contracts hand to later ones instead of
//! their own policyholders. `F` spreads the assets over maturity buckets —
//! by default a geometric run-off with a ten-year half-life — and applies
//! a per-bucket depreciation and a linearly decaying cross-financing
//! fraction starting at `C0`:
//!
//! ```text
//! LB = D·(A0 − GB) − SF0 − F,
//! F  = C0·Σ_t D_t·(T−t)/T·A0_t.
//! ```
//!
//! Balance-sheet figures are disclosed at coarse precision, so the
//! default [`BoundMode::Rounded`] rounds the anchor discount factor and
//! the depreciation factor to two decimals and treats the maximum discount
//! factor as 1 — reproducing published one-decimal tables cell for cell.
//! [`BoundMode::Exact`] keeps full precision and retains the maximum
//! discount factor (1.005 on the bundled curve) in the discounting step of
//! the derivation, which is the variant to use when the bound must
//! actually hold against a Monte Carlo valuation.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curves::{DiscountCurve, SpotRateSeries};
use crate::error::{Error, Result};

/// Dispersion of the accumulated policyholder share assumed inside the
/// cross-financing term at every tenor.
const CROSS_FINANCING_COV_PH: f64 = 0.05;

/// Arithmetic conventions of the bound; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// Disclosure-precision arithmetic: anchor discount factor and
    /// depreciation factor rounded to two decimals, maximum discount
    /// factor taken as 1.
    #[default]
    Rounded,
    /// Full-precision arithmetic, maximum discount factor retained.
    Exact,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// The surplus-realization ratio `η = P0M·(1 − cov_B·cov_ph)·gph/(1 − gph)`.
pub fn eta(p0m: f64, cov_b: f64, cov_ph: f64, gph: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gph) || !gph.is_finite() {
        return Err(Error::invalid(format!(
            "participation rate {gph} must lie in [0, 1)"
        )));
    }
    if !(p0m > 0.0) || !p0m.is_finite() {
        return Err(Error::invalid(format!(
            "discount factor {p0m} must be positive"
        )));
    }
    if !cov_b.is_finite() || cov_b < 0.0 || !cov_ph.is_finite() || cov_ph < 0.0 {
        return Err(Error::invalid(format!(
            "coefficients of variation ({cov_b}, {cov_ph}) must be non-negative"
        )));
    }
    Ok(p0m * (1.0 - cov_b * cov_ph) * gph / (1.0 - gph))
}

/// The depreciation factor `D = η/(1 + η)`, increasing from 0 towards 1.
pub fn depreciation(eta: f64) -> f64 {
    eta / (1.0 + eta)
}

/// Portfolio-level depreciation factor `Σ w_x·D_x` with surplus-cover
/// weights `w_x = (A0_x − GB_x)/Σ(A0_x − GB_x)`, from per-contract
/// `(A0_x, GB_x, η_x)` triples.
pub fn weighted_depreciation(parts: &[(f64, f64, f64)]) -> Result<f64> {
    let total: f64 = parts.iter().map(|(a0, gb, _)| a0 - gb).sum();
    if !(total > 0.0) {
        return Err(Error::invalid(format!(
            "aggregate surplus cover {total} must be positive"
        )));
    }
    Ok(parts
        .iter()
        .map(|(a0, gb, eta)| (a0 - gb) / total * depreciation(*eta))
        .sum())
}

/// Splits `a0` into maturity buckets `t = 1..=horizon` along a geometric
/// run-off with the given half-life; the final bucket absorbs the tail, so
/// the buckets sum to `a0` exactly.
pub fn geometric_runoff(a0: f64, horizon: u32, half_life: f64) -> Vec<f64> {
    let remaining = |s: u32| (2.0f64).powf(-f64::from(s) / half_life) * a0;
    (1..=horizon)
        .map(|t| {
            if t < horizon {
                remaining(t - 1) - remaining(t)
            } else {
                remaining(t - 1)
            }
        })
        .collect()
}

/// Per-bucket detail of a bound computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketDetail {
    /// Maturity year of the bucket.
    pub year: u32,
    /// Assets assumed to be realized in this year.
    pub asset_runoff: f64,
    pub eta: f64,
    pub depreciation: f64,
}

fn cross_financing_detail(
    a0: f64,
    c0: f64,
    gph: f64,
    horizon: u32,
    half_life: f64,
    curve: &DiscountCurve,
    series: &SpotRateSeries,
) -> Result<(Vec<BucketDetail>, f64)> {
    let runoff = geometric_runoff(a0, horizon, half_life);
    let mut buckets = Vec::with_capacity(horizon as usize);
    let mut weighted = 0.0;
    for (i, &asset_runoff) in runoff.iter().enumerate() {
        let t = i as u32 + 1;
        let e = eta(
            curve.factor(t)?,
            series.deflator_cov(t),
            CROSS_FINANCING_COV_PH,
            gph,
        )?;
        let d = depreciation(e);
        weighted += d * f64::from(horizon - t) / f64::from(horizon) * asset_runoff;
        buckets.push(BucketDetail {
            year: t,
            asset_runoff,
            eta: e,
            depreciation: d,
        });
    }
    Ok((buckets, c0 * weighted))
}

/// The cross-financing allowance `F = C0·Σ_t D_t·(T−t)/T·A0_t` over a
/// geometric run-off of `a0`.
pub fn cross_financing(
    a0: f64,
    c0: f64,
    gph: f64,
    horizon: u32,
    half_life: f64,
    curve: &DiscountCurve,
    series: &SpotRateSeries,
) -> Result<f64> {
    let (_, f) = cross_financing_detail(a0, c0, gph, horizon, half_life, curve, series)?;
    Ok(f)
}

fn default_cov_ph() -> f64 {
    0.05
}

fn default_horizon() -> u32 {
    60
}

fn default_half_life() -> f64 {
    10.0
}

fn default_deduct() -> bool {
    true
}

/// Balance-sheet inputs of the bound. `a0` is the market value of the
/// assets backing the business; in input files it may be given directly or
/// as `bv0 + ug0` (book value plus unrealized gains).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundInputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bv0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ug0: Option<f64>,
    /// Value of guaranteed benefits.
    pub gb: f64,
    /// Opening surplus fund.
    pub sf0: f64,
    /// Participation rate.
    pub gph: f64,
    /// Coefficient of variation of the accumulated policyholder share.
    #[serde(default = "default_cov_ph")]
    pub cov_ph: f64,
    /// Anchor maturity in years.
    pub m: u32,
    /// Initial cross-financing fraction.
    pub c0: f64,
    /// Run-off horizon in years.
    #[serde(default = "default_horizon")]
    pub horizon: u32,
    /// Half-life of the geometric run-off in years.
    #[serde(default = "default_half_life")]
    pub half_life: f64,
    /// Whether the opening surplus fund is deducted from the bound.
    #[serde(default = "default_deduct")]
    pub deduct_surplus_fund: bool,
    /// Disclosed value of future discretionary benefits, for comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_fdb: Option<f64>,
}

impl BoundInputs {
    /// Assets backing the business: `a0`, or `bv0 + ug0` when `a0` is not
    /// given directly.
    pub fn assets(&self) -> f64 {
        match self.a0 {
            Some(a0) => a0,
            None => self.bv0.unwrap_or(0.0) + self.ug0.unwrap_or(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.a0, self.bv0, self.ug0) {
            (None, Some(_), Some(_)) => {}
            (Some(_), None, None) => {}
            (Some(a0), bv0, ug0) => {
                let implied = bv0.unwrap_or(0.0) + ug0.unwrap_or(0.0);
                if (a0 - implied).abs() > 1e-9 * a0.abs().max(1.0) {
                    return Err(Error::invalid(format!(
                        "a0 = {a0} disagrees with bv0 + ug0 = {implied}"
                    )));
                }
            }
            (None, _, _) => {
                return Err(Error::invalid(
                    "asset value missing: give a0, or both bv0 and ug0",
                ));
            }
        }
        let a0 = self.assets();
        if !a0.is_finite() || !self.gb.is_finite() || self.gb < 0.0 {
            return Err(Error::invalid(format!(
                "asset value {a0} and guaranteed-benefit value {} must be finite and non-negative",
                self.gb
            )));
        }
        if a0 < self.gb {
            return Err(Error::invalid(format!(
                "assets {a0} fall short of guaranteed benefits {}",
                self.gb
            )));
        }
        if !self.sf0.is_finite() || self.sf0 < 0.0 {
            return Err(Error::invalid(format!(
                "surplus fund {} must be non-negative",
                self.sf0
            )));
        }
        if !self.gph.is_finite() || !(0.0..1.0).contains(&self.gph) {
            return Err(Error::invalid(format!(
                "participation rate {} must lie in [0, 1)",
                self.gph
            )));
        }
        if !self.cov_ph.is_finite() || !(0.0..1.0).contains(&self.cov_ph) {
            return Err(Error::invalid(format!(
                "cov_ph {} must lie in [0, 1)",
                self.cov_ph
            )));
        }
        if !self.c0.is_finite() || !(0.0..1.0).contains(&self.c0) {
            return Err(Error::invalid(format!(
                "cross-financing fraction {} must lie in [0, 1)",
                self.c0
            )));
        }
        if self.m == 0 || self.horizon == 0 || self.m > self.horizon {
            return Err(Error::invalid(format!(
                "anchor maturity {} must lie in 1..=horizon ({})",
                self.m, self.horizon
            )));
        }
        if !(self.half_life > 0.0) || !self.half_life.is_finite() {
            return Err(Error::invalid(format!(
                "half-life {} must be positive",
                self.half_life
            )));
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<BoundInputs> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let inputs: BoundInputs = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        inputs.validate()?;
        Ok(inputs)
    }
}

/// A computed lower bound with its full decomposition.
#[derive(Debug, Clone)]
pub struct LowerBound {
    pub mode: BoundMode,
    /// `P(0,M)` as used (rounded to two decimals in rounded mode).
    pub anchor_factor: f64,
    /// Deflator coefficient of variation at the anchor maturity.
    pub cov_b: f64,
    /// Maximum discount factor as used: 1 in rounded mode.
    pub max_discount_factor: f64,
    pub eta: f64,
    pub depreciation: f64,
    /// `D·(A0 − GB)` before deductions.
    pub lb1: f64,
    /// The surplus fund if it is deducted, else 0.
    pub surplus_deduction: f64,
    pub cross_financing: f64,
    /// `lb1 − surplus_deduction − cross_financing`.
    pub value: f64,
    pub buckets: Vec<BucketDetail>,
}

/// Computes the lower bound from balance-sheet inputs, the discount curve,
/// and the rate series the deflator dispersion is estimated from.
pub fn lower_bound(
    inputs: &BoundInputs,
    curve: &DiscountCurve,
    series: &SpotRateSeries,
    mode: BoundMode,
) -> Result<LowerBound> {
    inputs.validate()?;
    if curve.max_tenor() < inputs.horizon {
        return Err(Error::OutOfHorizon {
            argument: inputs.horizon,
            horizon: curve.max_tenor(),
        });
    }
    let a0 = inputs.assets();
    let cov_b = series.deflator_cov(inputs.m);

    let (anchor_factor, max_discount_factor) = match mode {
        BoundMode::Rounded => (round2(curve.factor(inputs.m)?), 1.0),
        BoundMode::Exact => (curve.factor(inputs.m)?, curve.max_factor(inputs.m)?),
    };
    let e = eta(anchor_factor, cov_b, inputs.cov_ph, inputs.gph)? / max_discount_factor;
    let d = match mode {
        BoundMode::Rounded => round2(depreciation(e)),
        BoundMode::Exact => depreciation(e),
    };
    let lb1 = d * (a0 - inputs.gb);

    let (buckets, f) = cross_financing_detail(
        a0,
        inputs.c0,
        inputs.gph,
        inputs.horizon,
        inputs.half_life,
        curve,
        series,
    )?;
    let surplus_deduction = if inputs.deduct_surplus_fund {
        inputs.sf0
    } else {
        0.0
    };
    Ok(LowerBound {
        mode,
        anchor_factor,
        cov_b,
        max_discount_factor,
        eta: e,
        depreciation: d,
        lb1,
        surplus_deduction,
        cross_financing: f,
        value: lb1 - surplus_deduction - f,
        buckets,
    })
}

/// One cell of a sensitivity grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub m: u32,
    pub gph: f64,
    pub c0: f64,
    pub value: f64,
}

/// One cross-financing value of a sensitivity grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossFinancingCell {
    pub gph: f64,
    pub c0: f64,
    pub value: f64,
}

/// Lower bounds over the cartesian grid of anchor maturities,
/// participation rates, and cross-financing fractions, plus the
/// cross-financing terms (which do not depend on the anchor maturity).
#[derive(Debug, Clone)]
pub struct SensitivityGrid {
    pub cells: Vec<GridCell>,
    pub cross_financing: Vec<CrossFinancingCell>,
}

pub fn sensitivity_grid(
    inputs: &BoundInputs,
    curve: &DiscountCurve,
    series: &SpotRateSeries,
    anchors: &[u32],
    participation_rates: &[f64],
    cross_fractions: &[f64],
    mode: BoundMode,
) -> Result<SensitivityGrid> {
    if anchors.is_empty() || participation_rates.is_empty() || cross_fractions.is_empty() {
        return Err(Error::invalid("sensitivity grid axes must be non-empty"));
    }
    let mut cells =
        Vec::with_capacity(anchors.len() * participation_rates.len() * cross_fractions.len());
    for &m in anchors {
        for &gph in participation_rates {
            for &c0 in cross_fractions {
                let cell_inputs = BoundInputs {
                    m,
                    gph,
                    c0,
                    ..inputs.clone()
                };
                let bound = lower_bound(&cell_inputs, curve, series, mode)?;
                cells.push(GridCell {
                    m,
                    gph,
                    c0,
                    value: bound.value,
                });
            }
        }
    }
    let mut cross = Vec::with_capacity(participation_rates.len() * cross_fractions.len());
    for &gph in participation_rates {
        for &c0 in cross_fractions {
            cross.push(CrossFinancingCell {
                gph,
                c0,
                value: cross_financing(
                    inputs.assets(),
                    c0,
                    gph,
                    inputs.horizon,
                    inputs.half_life,
                    curve,
                    series,
                )?,
            });
        }
    }
    Ok(SensitivityGrid {
        cells,
        cross_financing: cross,
    })
}

/// Per-contract inputs of the weighted bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPart {
    /// Assets attributed to the contract.
    pub a0: f64,
    /// Value of the contract's guaranteed benefits.
    pub gb: f64,
    /// The contract's maturity year, used as its realization anchor.
    pub maturity: u32,
    /// Dispersion of the contract's accumulated policyholder share.
    pub cov_ph: f64,
}

/// Lower bound built from per-contract data: the depreciation factor is
/// the surplus-cover-weighted combination of per-contract factors, and the
/// cross-financing allowance runs over the actual maturity buckets instead
/// of an assumed run-off. Full-precision arithmetic throughout, with the
/// maximum discount factor retained — the conventions under which the
/// bound is provable.
#[allow(clippy::too_many_arguments)]
pub fn weighted_lower_bound(
    parts: &[BoundPart],
    gph: f64,
    sf0: f64,
    c0: f64,
    horizon: u32,
    curve: &DiscountCurve,
    series: &SpotRateSeries,
    deduct_surplus_fund: bool,
) -> Result<LowerBound> {
    if parts.is_empty() {
        return Err(Error::invalid("weighted bound needs at least one contract"));
    }
    if !(0.0..1.0).contains(&c0) || !c0.is_finite() {
        return Err(Error::invalid(format!(
            "cross-financing fraction {c0} must lie in [0, 1)"
        )));
    }
    let mut triples = Vec::with_capacity(parts.len());
    let mut buckets = Vec::with_capacity(parts.len());
    let mut weighted_f = 0.0;
    for p in parts {
        if p.maturity == 0 || p.maturity > horizon {
            return Err(Error::invalid(format!(
                "contract maturity {} must lie in 1..=horizon ({horizon})",
                p.maturity
            )));
        }
        if !(p.a0 >= p.gb) || p.gb < 0.0 {
            return Err(Error::invalid(format!(
                "contract assets {} must cover its guaranteed benefits {}",
                p.a0, p.gb
            )));
        }
        let p0m = curve.factor(p.maturity)?;
        let cov_b = series.deflator_cov(p.maturity);
        let e = eta(p0m, cov_b, p.cov_ph, gph)? / curve.max_factor(p.maturity)?;
        triples.push((p.a0, p.gb, e));

        let e_cross = eta(p0m, cov_b, p.cov_ph, gph)?;
        let d_cross = depreciation(e_cross);
        weighted_f += d_cross * f64::from(horizon - p.maturity) / f64::from(horizon) * p.a0;
        buckets.push(BucketDetail {
            year: p.maturity,
            asset_runoff: p.a0,
            eta: e_cross,
            depreciation: d_cross,
        });
    }
    let d = weighted_depreciation(&triples)?;
    let a0: f64 = parts.iter().map(|p| p.a0).sum();
    let gb: f64 = parts.iter().map(|p| p.gb).sum();
    let lb1 = d * (a0 - gb);
    let f = c0 * weighted_f;
    let surplus_deduction = if deduct_surplus_fund { sf0 } else { 0.0 };
    Ok(LowerBound {
        mode: BoundMode::Exact,
        anchor_factor: f64::NAN,
        cov_b: f64::NAN,
        max_discount_factor: f64::NAN,
        eta: f64::NAN,
        depreciation: d,
        lb1,
        surplus_deduction,
        cross_financing: f,
        value: lb1 - surplus_deduction - f,
        buckets,
    })
}
