//! Shared fixtures for the pipeline benchmarks.

use std::path::{Path, PathBuf};

use runoff_core::curves::{DiscountCurve, SpotRateSeries};

/// Path of a bundled data file.
pub fn data_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

pub fn reference_curve() -> DiscountCurve {
    DiscountCurve::read_csv(data_path("eiopa_rfr_2017.csv")).expect("bundled curve parses")
}

pub fn reference_series() -> SpotRateSeries {
    SpotRateSeries::read_csv(data_path("bund_spot_15y_monthly.csv"), 15)
        .expect("bundled series parses")
}
