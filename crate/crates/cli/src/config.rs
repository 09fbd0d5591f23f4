//! Run configuration: defaults, JSON file, environment, flag overrides.

use anyhow::{Context, Result};
use homax_core::SwirlOptions;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Environment variable naming a configuration file to load when no
/// `--config` flag is given.
pub const CONFIG_ENV: &str = "HOMAX_CONFIG";

/// Solver controls for the swirl construction.
#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwirlConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub beta_guard: f64,
}

impl Default for SwirlConfig {
    fn default() -> Self {
        let o = SwirlOptions::default();
        SwirlConfig {
            tol: o.tol,
            max_iter: o.max_iter,
            beta_guard: o.beta_guard,
        }
    }
}

/// Global run configuration.
///
/// Resolution order: built-in defaults, then the JSON file named by
/// `--config` or the `HOMAX_CONFIG` environment variable, then
/// command-line flag overrides.
#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Mesh size (odd; even requests round up).
    pub n: usize,
    /// Grading exponent of the algebraic mesh block.
    pub grading_exponent: f64,
    /// Seed for every randomized battery.
    pub seed: u64,
    /// Bisection tolerance for the admissible gamma interval.
    pub gamma_tol: f64,
    pub swirl: SwirlConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 1025,
            grading_exponent: 4.0,
            seed: 0,
            gamma_tol: 1e-9,
            swirl: SwirlConfig::default(),
        }
    }
}

impl RunConfig {
    /// Load from an explicit path, else from `HOMAX_CONFIG`, else the
    /// defaults.
    pub fn load(explicit: Option<&Path>) -> Result<RunConfig> {
        let path = match explicit {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(CONFIG_ENV).map(Into::into),
        };
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(&p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn swirl_options(&self) -> SwirlOptions {
        SwirlOptions {
            tol: self.swirl.tol,
            max_iter: self.swirl.max_iter,
            beta_guard: self.swirl.beta_guard,
        }
    }
}
