//! Run configuration files.
//!
//! A run configuration is a TOML document with a `schema_version`, an
//! optional run `seed` and one optional table per stage:
//!
//! ```toml
//! schema_version = 1
//! seed = 42
//!
//! [gaussian]
//! n_r = 16
//! n_meas = 8
//! n_d = 64
//! n_b = 150
//! n_test = 50
//! pnz = 0.1
//! snr_db = 20.0
//!
//! [train]
//! layers = 6
//! lambda0 = 0.1
//! learning_rate = 0.001
//! refinements = [0.5]
//! max_iter = 2000
//!
//! [bista]
//! lambda = 0.1
//! iters = 200
//! ```
//!
//! Unknown keys are rejected. When the top-level seed is present it replaces
//! the seed of every table; the resolved document is written next to each
//! command's results.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{GaussianCaseConfig, ThermalCaseConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::train::TrainConfig;

pub const RUN_INFO: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BistaConfig {
    pub lambda: f64,
    /// `1/L` when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    pub iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub gaussian: Option<GaussianCaseConfig>,
    #[serde(default)]
    pub thermal: Option<ThermalCaseConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub bista: Option<BistaConfig>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != io::SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {}, expected {}",
                cfg.schema_version,
                io::SCHEMA_VERSION
            )));
        }
        Ok(cfg.resolved())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Applies the top-level seed to every table.
    pub fn resolved(mut self) -> Self {
        if let Some(seed) = self.seed {
            if let Some(g) = &mut self.gaussian {
                g.seed = seed;
            }
            if let Some(t) = &mut self.thermal {
                t.seed = seed;
            }
            if let Some(t) = &mut self.train {
                t.seed = seed;
            }
        }
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration is always representable")
    }
}

/// Provenance written into every output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// Fully resolved settings of the command.
    pub resolved: serde_json::Value,
}

pub fn write_run_info(dir: impl AsRef<Path>, command: &str, resolved: serde_json::Value) -> Result<()> {
    let dir = dir.as_ref();
    io::ensure_dir(dir)?;
    io::write_json(
        dir.join(RUN_INFO),
        &RunInfo {
            schema_version: io::SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: io::TOOL_VERSION.into(),
            command: command.into(),
            resolved,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
schema_version = 1
seed = 42

[gaussian]
n_r = 16
n_meas = 8
n_d = 64
n_b = 10
pnz = 0.1
snr_db = 20.0
seed = 3

[train]
layers = 2
lambda0 = 0.1
learning_rate = 0.001
refinements = [0.5]
max_iter = 3
"#;

    #[test]
    fn parses_and_applies_seed() {
        let cfg = RunConfig::parse(EXAMPLE).unwrap();
        assert_eq!(cfg.gaussian.as_ref().unwrap().seed, 42);
        assert_eq!(cfg.train.as_ref().unwrap().seed, 42);
        assert!(cfg.thermal.is_none());
        let again = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = EXAMPLE.replace("pnz = 0.1", "pnz = 0.1\nbogus = 1");
        assert!(matches!(RunConfig::parse(&bad), Err(Error::Config(_))));
        assert!(RunConfig::parse("schema_version = 1\nextra = true\n").is_err());
        assert!(RunConfig::parse("schema_version = 9\n").is_err());
    }
}
