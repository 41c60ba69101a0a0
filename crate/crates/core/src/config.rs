//! The run configuration: one JSON document holding every knob of a
//! training run. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{EpisodeConfig, TaskDistribution};
use crate::error::{Error, Result};
use crate::nn::NetworkConfig;
use crate::ppo::TrainConfig;

/// Environment variable overriding the run seed.
pub const SEED_ENV_VAR: &str = "METATUNE_SEED";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub episode: EpisodeConfig,
    pub train: TrainConfig,
    pub network: NetworkConfig,
    pub tasks: TaskDistribution,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.episode.validate()?;
        self.train.validate()?;
        self.network.validate()?;
        let t = &self.tasks;
        let ok = |(lo, hi): (f64, f64), min: f64, max: f64| lo.is_finite() && hi.is_finite() && min <= lo && lo <= hi && hi <= max;
        if !(ok(t.k_gain, 1e-6, f64::MAX)
            && ok(t.tau1, 5.0 * self.episode.dt_sim - 1e-9, f64::MAX)
            && ok(t.tau2_ratio, 0.0, 1.0)
            && ok(t.theta_ratio, 0.0, f64::MAX))
        {
            return Err(Error::Config {
                path: "tasks".into(),
                message: format!("invalid task distribution {t:?}"),
            });
        }
        Ok(())
    }

    /// Parses a config document, reporting the key path of the first error.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}
