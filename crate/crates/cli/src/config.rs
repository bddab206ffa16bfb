//! Experiment configuration: JSON file values, overridden by command-line
//! flags, validated before any solve.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tikreg::experiments::AlphaStart;
use tikreg::problems::WSpec;

/// Rejected configuration, naming the offending field.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config field `{}`: {}", self.field, self.reason)
    }
}

impl std::error::Error for ConfigError {}

pub fn bad(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Geometric sweep of noise levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaSweep {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// Every field is optional; absent fields take the experiment defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<u8>,
    pub n: Option<usize>,
    pub p: Option<f64>,
    pub eta: Option<f64>,
    pub width: Option<f64>,
    pub band: Option<usize>,
    pub sigma: Option<f64>,
    pub w_spec: Option<WSpec>,
    pub delta: Option<f64>,
    pub deltas: Option<DeltaSweep>,
    pub alpha_start: Option<AlphaStart>,
    pub alpha_max: Option<f64>,
    pub alpha_min: Option<f64>,
    pub q: Option<f64>,
    pub count: Option<usize>,
    pub k0: Option<usize>,
    pub tau: Option<f64>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub slack: Option<f64>,
    pub png: Option<bool>,
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("config", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| bad("config", format!("{}: {e}", path.display())))
    }

    /// Fields of `over` that are set replace those of `self`.
    pub fn merge(self, over: ExperimentConfig) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { ExperimentConfig { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            experiment, n, p, eta, width, band, sigma, w_spec, delta, deltas, alpha_start, alpha_max, alpha_min, q,
            count, k0, tau, seed, tol, max_iter, slack, png, out
        )
    }

    pub fn check_experiment(&self, id: u8) -> Result<(), ConfigError> {
        match self.experiment {
            Some(e) if e != id => Err(bad("experiment", format!("config is for experiment {e}, not {id}"))),
            _ => Ok(()),
        }
    }
}

pub fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(field, format!("must be positive, got {v}")))
    }
}

pub fn nonnegative(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(field, format!("must be nonnegative, got {v}")))
    }
}

pub fn ratio(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(bad(field, format!("must lie in (0, 1), got {v}")))
    }
}

pub fn at_least(field: &str, v: usize, min: usize) -> Result<usize, ConfigError> {
    if v >= min {
        Ok(v)
    } else {
        Err(bad(field, format!("must be at least {min}, got {v}")))
    }
}

pub fn power_of_two(field: &str, v: usize) -> Result<usize, ConfigError> {
    if v >= 2 && v.is_power_of_two() {
        Ok(v)
    } else {
        Err(bad(field, format!("must be a power of two >= 2, got {v}")))
    }
}
