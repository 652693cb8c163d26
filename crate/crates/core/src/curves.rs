//! Initial term structure, forward bootstrap, and deflator statistics.
//!
//! Everything downstream hangs off the initial curve: the scenario model is
//! fitted to it exactly, guaranteed liabilities are discounted on it, and
//! the discretionary-benefit bound needs both its level `P(0,M)` at the
//! portfolio's anchor maturity and a coefficient of variation for the
//! stochastic deflator estimated from a historical spot-rate series.
//!
//! Curves live on an annual grid: `P(0,t)` for `t = 1..=T` in whole years,
//! no intra-year interpolation. Negative yields are a fact of the market the
//! curve describes, so discount factors above one are accepted and nothing
//! assumes monotonicity.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Annual zero-coupon discount factors `P(0,t)`, `t = 1..=max_tenor()`.
///
/// Immutable after construction; cheap to clone and safe to share across
/// scenario workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountCurve {
    factors: Vec<f64>,
}

impl DiscountCurve {
    /// Builds a curve from `P(0,1), P(0,2), …`. Every factor must be finite
    /// and strictly positive; factors above one are legal (negative yields).
    pub fn from_factors(factors: Vec<f64>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::invalid("discount curve needs at least one tenor"));
        }
        for (i, &p) in factors.iter().enumerate() {
            if !p.is_finite() || p <= 0.0 {
                return Err(Error::invalid(format!(
                    "discount factor P(0,{}) = {p} must be finite and positive",
                    i + 1
                )));
            }
        }
        Ok(DiscountCurve { factors })
    }

    /// Flat curve at an annually compounded `rate` out to `tenor` years.
    pub fn flat(rate: f64, tenor: u32) -> Result<Self> {
        if !rate.is_finite() || rate <= -1.0 {
            return Err(Error::invalid(format!("flat rate {rate} must exceed -1")));
        }
        let factors = (1..=tenor)
            .map(|t| (1.0 + rate).powi(-(t as i32)))
            .collect();
        Self::from_factors(factors)
    }

    /// Longest tenor on the curve, in years.
    pub fn max_tenor(&self) -> u32 {
        self.factors.len() as u32
    }

    /// `P(0,t)` for `t` in `1..=max_tenor()`.
    pub fn factor(&self, t: u32) -> Result<f64> {
        if t == 0 || t > self.max_tenor() {
            return Err(Error::OutOfHorizon {
                argument: t,
                horizon: self.max_tenor(),
            });
        }
        Ok(self.factors[(t - 1) as usize])
    }

    /// All factors, index `t-1` holding `P(0,t)`.
    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    /// Largest discount factor up to `m` years: `max_{1≤t≤m} P(0,t)`.
    /// With negative short yields this exceeds one.
    pub fn max_factor(&self, m: u32) -> Result<f64> {
        if m == 0 || m > self.max_tenor() {
            return Err(Error::OutOfHorizon {
                argument: m,
                horizon: self.max_tenor(),
            });
        }
        Ok(self.factors[..m as usize]
            .iter()
            .fold(f64::MIN, |a, &b| a.max(b)))
    }

    /// Curve restricted to its first `m` tenors.
    pub fn truncate(&self, m: u32) -> Result<Self> {
        if m == 0 || m > self.max_tenor() {
            return Err(Error::OutOfHorizon {
                argument: m,
                horizon: self.max_tenor(),
            });
        }
        DiscountCurve::from_factors(self.factors[..m as usize].to_vec())
    }

    /// One-year simple forwards implied by the quotient bootstrap:
    /// `F_{t-1} = P(0,t-1)/P(0,t) − 1` with `P(0,0) = 1`.
    ///
    /// Rolling the forwards back up (`B_t = Π_{s≤t} (1+F_{s-1})`) reproduces
    /// every `1/P(0,t)`, so the curve and its forwards carry the same
    /// information.
    pub fn bootstrap_forwards(&self) -> ForwardCurve {
        let mut forwards = Vec::with_capacity(self.factors.len());
        let mut prev = 1.0;
        for &p in &self.factors {
            forwards.push(prev / p - 1.0);
            prev = p;
        }
        ForwardCurve { forwards }
    }

    /// Deterministic deflator `B_t^{-1}` of the zero-volatility roll-over
    /// bank account; equals `P(0,t)` up to floating-point noise.
    pub fn deterministic_deflator(&self, t: u32) -> Result<f64> {
        if t == 0 || t > self.max_tenor() {
            return Err(Error::OutOfHorizon {
                argument: t,
                horizon: self.max_tenor(),
            });
        }
        Ok(self.bootstrap_forwards().bank_account()[t as usize].recip())
    }

    /// Reads a `tenor,discount_factor` CSV. Strict: exactly that header,
    /// two columns, tenors contiguous from 1. Parse errors carry 1-based
    /// line numbers.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut factors = Vec::new();
        let mut expected_tenor: u32 = 1;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if line_no == 1 {
                if fields != ["tenor", "discount_factor"] {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("expected header `tenor,discount_factor`, got `{line}`"),
                    ));
                }
                continue;
            }
            if fields.len() != 2 {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected 2 fields, got {}", fields.len()),
                ));
            }
            let tenor: u32 = fields[0]
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("bad tenor `{}`", fields[0])))?;
            if tenor != expected_tenor {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected tenor {expected_tenor}, got {tenor}"),
                ));
            }
            let factor: f64 = fields[1].parse().map_err(|_| {
                Error::parse(
                    path,
                    line_no,
                    format!("bad discount factor `{}`", fields[1]),
                )
            })?;
            if !factor.is_finite() || factor <= 0.0 {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("discount factor {factor} must be finite and positive"),
                ));
            }
            factors.push(factor);
            expected_tenor += 1;
        }
        DiscountCurve::from_factors(factors).map_err(|e| Error::parse(path, 1, e.to_string()))
    }

    /// Renders the curve in the `tenor,discount_factor` CSV layout.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tenor,discount_factor\n");
        for (i, p) in self.factors.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, p);
        }
        out
    }
}

/// One-year simple forward rates `F_{t-1}` for years `t = 1..=horizon()`.
///
/// `F_{t-1}` is the rate earned over `(t-1, t]` by the roll-over bank
/// account, fixed at the start of the year.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCurve {
    forwards: Vec<f64>,
}

impl ForwardCurve {
    /// Builds from raw forwards; each must be finite and exceed −100%.
    pub fn from_forwards(forwards: Vec<f64>) -> Result<Self> {
        if forwards.is_empty() {
            return Err(Error::invalid("forward curve needs at least one year"));
        }
        for (t, &f) in forwards.iter().enumerate() {
            if !f.is_finite() || f <= -1.0 {
                return Err(Error::invalid(format!(
                    "forward F_{t} = {f} must be finite and exceed -1"
                )));
            }
        }
        Ok(ForwardCurve { forwards })
    }

    /// Number of years covered.
    pub fn horizon(&self) -> u32 {
        self.forwards.len() as u32
    }

    /// `F_t`, the rate for year `(t, t+1]`, `t` in `0..horizon()`.
    pub fn forward(&self, t: u32) -> Result<f64> {
        self.forwards
            .get(t as usize)
            .copied()
            .ok_or(Error::OutOfHorizon {
                argument: t,
                horizon: self.horizon(),
            })
    }

    /// All forwards, index `t` holding `F_t`.
    pub fn forwards(&self) -> &[f64] {
        &self.forwards
    }

    /// Bank account path `B_0 = 1, B_t = B_{t-1}·(1+F_{t-1})`; the returned
    /// vector has `horizon()+1` entries, `B_t` at index `t`.
    pub fn bank_account(&self) -> Vec<f64> {
        let mut bank = Vec::with_capacity(self.forwards.len() + 1);
        let mut b = 1.0;
        bank.push(b);
        for &f in &self.forwards {
            b *= 1.0 + f;
            bank.push(b);
        }
        bank
    }

    /// Discount curve implied by the bank account: `P(0,t) = B_t^{-1}`.
    pub fn to_discount_curve(&self) -> DiscountCurve {
        let factors = self.bank_account()[1..].iter().map(|b| b.recip()).collect();
        DiscountCurve { factors }
    }
}

/// Monthly observations of an annually compounded spot rate at one fixed
/// tenor, e.g. three years of month-end 15-year yields.
///
/// The series estimates how much the stochastic deflator at its tenor
/// disperses: the sample coefficient of variation of `(1+r)^{-tenor}` over
/// the observed rates `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotRateSeries {
    tenor: u32,
    dates: Vec<String>,
    rates: Vec<f64>,
}

impl SpotRateSeries {
    /// Builds a series; needs at least two observations, a tenor of at
    /// least one year, and rates in (−100%, +100%).
    pub fn new(tenor: u32, dates: Vec<String>, rates: Vec<f64>) -> Result<Self> {
        if tenor == 0 {
            return Err(Error::invalid("spot series tenor must be at least 1 year"));
        }
        if rates.len() < 2 {
            return Err(Error::invalid(format!(
                "spot series needs at least 2 observations, got {}",
                rates.len()
            )));
        }
        if dates.len() != rates.len() {
            return Err(Error::invalid(format!(
                "{} dates vs {} rates",
                dates.len(),
                rates.len()
            )));
        }
        for (i, &r) in rates.iter().enumerate() {
            if !r.is_finite() || r <= -1.0 || r >= 1.0 {
                return Err(Error::invalid(format!(
                    "spot rate {r} at observation {} out of range (-100%, 100%); \
                     use a `%` suffix for percentages",
                    i + 1
                )));
            }
        }
        Ok(SpotRateSeries {
            tenor,
            dates,
            rates,
        })
    }

    /// Reads a `date,rate` CSV; the tenor the rates refer to is supplied by
    /// the caller. Rates parse as decimals (`0.0108`) or percent strings
    /// (`1.08%`).
    pub fn read_csv(path: impl AsRef<Path>, tenor: u32) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut dates = Vec::new();
        let mut rates = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if line_no == 1 {
                if fields != ["date", "rate"] {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("expected header `date,rate`, got `{line}`"),
                    ));
                }
                continue;
            }
            if fields.len() != 2 {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected 2 fields, got {}", fields.len()),
                ));
            }
            if fields[0].is_empty() {
                return Err(Error::parse(path, line_no, "empty date"));
            }
            let rate = parse_rate(fields[1])
                .ok_or_else(|| Error::parse(path, line_no, format!("bad rate `{}`", fields[1])))?;
            dates.push(fields[0].to_string());
            rates.push(rate);
        }
        SpotRateSeries::new(tenor, dates, rates).map_err(|e| Error::parse(path, 1, e.to_string()))
    }

    /// Tenor in years the quoted rates refer to.
    pub fn tenor(&self) -> u32 {
        self.tenor
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Observation labels, typically month-end dates.
    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    /// Observed rates as decimals.
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Sample mean of the observed rates.
    pub fn mean_rate(&self) -> f64 {
        self.rates.iter().sum::<f64>() / self.rates.len() as f64
    }

    /// Unbiased (n−1) sample standard deviation of the observed rates.
    pub fn sd_rate(&self) -> f64 {
        sample_sd(&self.rates)
    }

    /// Coefficient of variation of the deflator at maturity `t`.
    ///
    /// At the series' own tenor this is measured directly: the sample
    /// coefficient of variation of `(1+r)^{-t}` over the observed rates.
    /// At any other maturity the series carries no direct observations, so
    /// the first-order duration rule `CoV(t) = t·SD[r]/(1+mean[r])` is used
    /// (flat rate volatility across maturities). Both branches use the
    /// unbiased standard deviation and agree to about 1% at the tenor
    /// itself. `t = 0` returns 0: the time-zero deflator is constant.
    pub fn deflator_cov(&self, t: u32) -> f64 {
        if t == self.tenor {
            let deflators: Vec<f64> = self
                .rates
                .iter()
                .map(|&r| (1.0 + r).powi(-(t as i32)))
                .collect();
            let mean = deflators.iter().sum::<f64>() / deflators.len() as f64;
            sample_sd(&deflators) / mean
        } else {
            t as f64 * self.sd_rate() / (1.0 + self.mean_rate())
        }
    }
}

/// Parses a rate given as a decimal (`0.0108`) or percent string (`1.08%`).
pub(crate) fn parse_rate(field: &str) -> Option<f64> {
    let field = field.trim();
    let (text, scale) = match field.strip_suffix('%') {
        Some(prefix) => (prefix.trim_end(), 0.01),
        None => (field, 1.0),
    };
    let value: f64 = text.parse().ok()?;
    let rate = value * scale;
    rate.is_finite().then_some(rate)
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (ss / (n - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write as _;

    fn data(name: &str) -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../data")
            .join(name)
    }

    fn reference_curve() -> DiscountCurve {
        DiscountCurve::read_csv(data("eiopa_rfr_2017.csv")).unwrap()
    }

    fn reference_series() -> SpotRateSeries {
        SpotRateSeries::read_csv(data("bund_spot_15y_monthly.csv"), 15).unwrap()
    }

    #[test]
    fn flat_unit_curve_has_zero_forwards() {
        let curve = DiscountCurve::from_factors(vec![1.0; 8]).unwrap();
        for &f in curve.bootstrap_forwards().forwards() {
            assert_eq!(f, 0.0);
        }
    }

    #[test]
    fn flat_curve_forwards_equal_the_rate() {
        let curve = DiscountCurve::flat(0.02, 10).unwrap();
        for &f in curve.bootstrap_forwards().forwards() {
            assert!((f - 0.02).abs() < 1e-13);
        }
        let bank = curve.bootstrap_forwards().bank_account();
        assert!((bank[10] - 1.02f64.powi(10)).abs() < 1e-12);
    }

    #[test]
    fn reference_short_forward_is_negative() {
        let fwd = reference_curve().bootstrap_forwards();
        // P(0,1) = 1.004 ⇒ F_0 = 1/1.004 − 1.
        assert!((fwd.forward(0).unwrap() - (1.0 / 1.004 - 1.0)).abs() < 1e-15);
        assert!((fwd.forward(0).unwrap() + 0.003984).abs() < 1e-6);
        // P(0,14) = 0.855, P(0,15) = 0.839.
        assert!((fwd.forward(14).unwrap() - (0.855 / 0.839 - 1.0)).abs() < 1e-15);
        assert!((fwd.forward(14).unwrap() - 0.01907).abs() < 1e-5);
    }

    #[test]
    fn deterministic_deflator_reproduces_the_curve() {
        let curve = reference_curve();
        assert!((curve.deterministic_deflator(15).unwrap() - 0.839).abs() < 1e-12);
        assert!((curve.deterministic_deflator(60).unwrap() - 0.169).abs() < 1e-12);
        let flat = DiscountCurve::from_factors(vec![1.0; 3]).unwrap();
        assert_eq!(flat.deterministic_deflator(1).unwrap(), 1.0);
    }

    #[test]
    fn max_factor_on_reference_curve() {
        let curve = reference_curve();
        assert_eq!(curve.max_factor(15).unwrap(), 1.005);
        assert_eq!(curve.max_factor(1).unwrap(), 1.004);
        assert_eq!(curve.max_factor(60).unwrap(), 1.005);
        assert!(matches!(
            curve.max_factor(61),
            Err(Error::OutOfHorizon {
                argument: 61,
                horizon: 60
            })
        ));
        // Strictly decreasing curve: the maximum sits at the first tenor.
        let dec = DiscountCurve::flat(0.03, 20).unwrap();
        assert_eq!(dec.max_factor(20).unwrap(), dec.factor(1).unwrap());
    }

    #[test]
    fn max_factor_dominates_every_tenor() {
        let curve = reference_curve();
        let m = 23;
        let cap = curve.max_factor(m).unwrap();
        for t in 1..=m {
            assert!(cap >= curve.factor(t).unwrap());
        }
    }

    #[test]
    fn rejects_bad_factors() {
        assert!(DiscountCurve::from_factors(vec![]).is_err());
        assert!(DiscountCurve::from_factors(vec![1.0, 0.0]).is_err());
        assert!(DiscountCurve::from_factors(vec![1.0, -0.5]).is_err());
        assert!(DiscountCurve::from_factors(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn csv_round_trip_and_strictness() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("curve.csv");
        std::fs::write(&good, "tenor,discount_factor\n1,1.004\n2,1.005\n3,0.99\n").unwrap();
        let curve = DiscountCurve::read_csv(&good).unwrap();
        assert_eq!(curve.max_tenor(), 3);
        assert_eq!(curve.factor(2).unwrap(), 1.005);

        let reparsed = DiscountCurve::read_csv(write_tmp(&dir, curve.to_csv())).unwrap();
        assert_eq!(reparsed, curve);

        let bad_header = write_tmp(&dir, "tenor,df\n1,1.0\n".into());
        let err = DiscountCurve::read_csv(&bad_header).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");

        let bad_value = write_tmp(&dir, "tenor,discount_factor\n1,1.0\n2,oops\n".into());
        let err = DiscountCurve::read_csv(&bad_value).unwrap_err();
        assert!(err.to_string().contains(":3:"), "{err}");

        let gap = write_tmp(&dir, "tenor,discount_factor\n1,1.0\n3,0.9\n".into());
        let err = DiscountCurve::read_csv(&gap).unwrap_err();
        assert!(err.to_string().contains("expected tenor 2"), "{err}");

        let extra_col = write_tmp(&dir, "tenor,discount_factor\n1,1.0,x\n".into());
        assert!(DiscountCurve::read_csv(&extra_col).is_err());
    }

    fn write_tmp(dir: &tempfile::TempDir, content: String) -> std::path::PathBuf {
        let mut file = tempfile::NamedTempFile::new_in(dir.path()).unwrap();
        file.write_all(content.as_bytes()).unwrap();
        let (_, path) = file.keep().unwrap();
        path
    }

    #[test]
    fn spot_csv_accepts_percent_and_decimal() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(
            &dir,
            "date,rate\n2017-10,1.26%\n2017-11, 1.18 %\n2017-12,0.0117\n".into(),
        );
        let series = SpotRateSeries::read_csv(&path, 15).unwrap();
        assert_eq!(series.len(), 3);
        assert!((series.rates()[0] - 0.0126).abs() < 1e-12);
        assert!((series.rates()[1] - 0.0118).abs() < 1e-12);
        assert!((series.rates()[2] - 0.0117).abs() < 1e-12);

        let bad = write_tmp(&dir, "date,rate\n2017-10,1.26\n2017-11,1.18\n".into());
        let err = SpotRateSeries::read_csv(&bad, 15).unwrap_err();
        assert!(err.to_string().contains("out of range"), "{err}");
    }

    #[test]
    fn reference_series_moments() {
        let series = reference_series();
        assert_eq!(series.len(), 37);
        assert!((series.mean_rate() - 0.010154054054054054).abs() < 1e-15);
        assert!((series.sd_rate() - 0.0025063912).abs() < 1e-9);
    }

    #[test]
    fn deflator_cov_at_tenor_is_the_sample_cov() {
        let series = reference_series();
        assert!((series.deflator_cov(15) - 0.0375626282).abs() < 1e-9);
    }

    #[test]
    fn deflator_cov_extrapolates_by_duration() {
        let series = reference_series();
        assert!((series.deflator_cov(30) - 0.0744359106).abs() < 1e-9);
        // The duration rule is linear in t away from the anchor.
        let ratio = series.deflator_cov(30) / series.deflator_cov(10);
        assert!((ratio - 3.0).abs() < 1e-12);
        assert_eq!(series.deflator_cov(0), 0.0);
    }

    #[test]
    fn duration_rule_agrees_with_direct_measurement_at_the_anchor() {
        let series = reference_series();
        // Re-anchor the same observations at a 30-year tenor so that t=15
        // goes through the duration rule instead of the direct branch.
        let rebased =
            SpotRateSeries::new(30, series.dates().to_vec(), series.rates().to_vec()).unwrap();
        let direct = series.deflator_cov(15);
        let extrapolated = rebased.deflator_cov(15);
        assert!((direct - extrapolated).abs() / direct < 0.02);
    }

    #[test]
    fn constant_series_has_zero_cov_everywhere() {
        let series = SpotRateSeries::new(
            15,
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.01, 0.01, 0.01],
        )
        .unwrap();
        for t in [1, 15, 30, 60] {
            assert!(series.deflator_cov(t).abs() < 1e-15);
        }
    }

    #[test]
    fn deflator_cov_ignores_observation_order() {
        let series = reference_series();
        let mut dates = series.dates().to_vec();
        let mut rates = series.rates().to_vec();
        dates.reverse();
        rates.reverse();
        let reversed = SpotRateSeries::new(15, dates, rates).unwrap();
        for t in [5, 15, 30] {
            let a = series.deflator_cov(t);
            let b = reversed.deflator_cov(t);
            assert!((a - b).abs() <= 1e-12 * a.abs());
        }
    }

    proptest! {
        #[test]
        fn bootstrap_round_trips_any_positive_curve(
            factors in proptest::collection::vec(0.05f64..2.0, 1..60)
        ) {
            let curve = DiscountCurve::from_factors(factors).unwrap();
            let back = curve.bootstrap_forwards().to_discount_curve();
            for t in 1..=curve.max_tenor() {
                let orig = curve.factor(t).unwrap();
                let rt = back.factor(t).unwrap();
                prop_assert!((orig - rt).abs() <= 1e-12 * orig.abs());
            }
        }

        #[test]
        fn bank_account_recursion_holds(
            factors in proptest::collection::vec(0.2f64..1.5, 1..40)
        ) {
            let curve = DiscountCurve::from_factors(factors).unwrap();
            let fwd = curve.bootstrap_forwards();
            let bank = fwd.bank_account();
            prop_assert_eq!(bank[0], 1.0);
            for t in 1..bank.len() {
                let step = bank[t - 1] * (1.0 + fwd.forward((t - 1) as u32).unwrap());
                prop_assert_eq!(bank[t], step);
            }
        }
    }
}
