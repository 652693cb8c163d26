//! Run configuration: built-in defaults, overridden by an optional TOML
//! file, overridden again by command-line flags. Relative input paths
//! resolve against the data directory (`--data-dir`, else the
//! `RUNOFF_DATA_DIR` environment variable, else `./data`).

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use runoff_core::scenarios::RateModelParams;
use serde::Deserialize;

use crate::{Failure, EXIT_INPUT};

pub const DEFAULT_CURVE: &str = "eiopa_rfr_2017.csv";
pub const DEFAULT_SPOTS: &str = "bund_spot_15y_monthly.csv";
pub const DEFAULT_PORTFOLIO: &str = "toy_stochastic.json";
pub const DEFAULT_BOUND_INPUTS: &str = "allianz_sfcr_2017.json";

/// The tenor in years of the bundled spot-rate series.
pub const SPOT_SERIES_TENOR: u32 = 15;

/// Shape of the TOML configuration file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    curve: Option<String>,
    spots: Option<String>,
    portfolio: Option<String>,
    bound_inputs: Option<String>,
    scenarios: Option<usize>,
    seed: Option<u64>,
    leakage_tolerance: Option<f64>,
    martingale_tolerance: Option<f64>,
    output_dir: Option<String>,
    exact: Option<bool>,
    deduct_surplus_fund: Option<bool>,
    #[serde(default)]
    model: ModelConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelConfig {
    mean_reversion: Option<f64>,
    volatility: Option<f64>,
}

/// Command-line values that can override the file configuration. `None`
/// means the flag was not given.
#[derive(Debug, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub curve: Option<PathBuf>,
    pub spots: Option<PathBuf>,
    pub portfolio: Option<PathBuf>,
    pub bound_inputs: Option<PathBuf>,
    pub scenarios: Option<usize>,
    pub seed: Option<u64>,
    pub leakage_tolerance: Option<f64>,
    pub martingale_tolerance: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub exact: bool,
    pub no_deduct_surplus_fund: bool,
    pub volatility: Option<f64>,
    pub mean_reversion: Option<f64>,
}

/// A fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub curve: PathBuf,
    pub spots: PathBuf,
    pub portfolio: PathBuf,
    pub bound_inputs: PathBuf,
    pub scenarios: usize,
    pub seed: u64,
    pub leakage_tolerance: f64,
    pub martingale_tolerance: f64,
    pub output_dir: Option<PathBuf>,
    pub exact: bool,
    pub deduct_surplus_fund: bool,
    pub model: RateModelParams,
}

fn read_file_config(path: &Path) -> Result<FileConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_INPUT,
        message: format!("{}: {e}", path.display()),
    })?;
    toml::from_str(&text).map_err(|e| Failure {
        code: EXIT_INPUT,
        message: format!("{}: {e}", path.display()),
    })
}

fn against(dir: &Path, path: impl Into<PathBuf>) -> PathBuf {
    let path = path.into();
    if path.is_absolute() {
        path
    } else {
        dir.join(path)
    }
}

impl RunConfig {
    /// Resolves the effective configuration from flags, the optional
    /// configuration file, the environment, and built-in defaults.
    pub fn resolve(overrides: &Overrides) -> Result<RunConfig, Failure> {
        let file = match &overrides.config {
            Some(path) => read_file_config(path)?,
            None => FileConfig::default(),
        };

        let data_dir = overrides
            .data_dir
            .clone()
            .or_else(|| env::var_os("RUNOFF_DATA_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"));

        let pick_path = |flag: &Option<PathBuf>, file_value: &Option<String>, default: &str| {
            let raw = flag
                .clone()
                .or_else(|| file_value.clone().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from(default));
            against(&data_dir, raw)
        };

        let defaults = RateModelParams::default();
        let config = RunConfig {
            curve: pick_path(&overrides.curve, &file.curve, DEFAULT_CURVE),
            spots: pick_path(&overrides.spots, &file.spots, DEFAULT_SPOTS),
            portfolio: pick_path(&overrides.portfolio, &file.portfolio, DEFAULT_PORTFOLIO),
            bound_inputs: pick_path(
                &overrides.bound_inputs,
                &file.bound_inputs,
                DEFAULT_BOUND_INPUTS,
            ),
            scenarios: overrides.scenarios.or(file.scenarios).unwrap_or(1000),
            seed: overrides.seed.or(file.seed).unwrap_or(42),
            leakage_tolerance: overrides
                .leakage_tolerance
                .or(file.leakage_tolerance)
                .unwrap_or(runoff_core::valuation::DEFAULT_LEAKAGE_TOLERANCE),
            martingale_tolerance: overrides
                .martingale_tolerance
                .or(file.martingale_tolerance)
                .unwrap_or(runoff_core::scenarios::DEFAULT_MARTINGALE_TOLERANCE),
            output_dir: overrides
                .output_dir
                .clone()
                .or_else(|| file.output_dir.clone().map(PathBuf::from)),
            exact: overrides.exact || file.exact.unwrap_or(false),
            deduct_surplus_fund: if overrides.no_deduct_surplus_fund {
                false
            } else {
                file.deduct_surplus_fund.unwrap_or(true)
            },
            model: RateModelParams {
                mean_reversion: overrides
                    .mean_reversion
                    .or(file.model.mean_reversion)
                    .unwrap_or(defaults.mean_reversion),
                volatility: overrides
                    .volatility
                    .or(file.model.volatility)
                    .unwrap_or(defaults.volatility),
            },
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), Failure> {
        let mut problems = Vec::new();
        if self.scenarios == 0 {
            problems.push("scenario count must be at least 1".to_string());
        }
        if !(self.leakage_tolerance > 0.0) {
            problems.push(format!(
                "leakage tolerance {} must be positive",
                self.leakage_tolerance
            ));
        }
        if !(self.martingale_tolerance > 0.0) {
            problems.push(format!(
                "martingale tolerance {} must be positive",
                self.martingale_tolerance
            ));
        }
        if let Err(e) = self.model.validate() {
            problems.push(e.to_string());
        }
        match problems.is_empty() {
            true => Ok(()),
            false => Err(Failure {
                code: EXIT_INPUT,
                message: problems.join("; "),
            }),
        }
    }
}
