//! Run configuration: one JSON file covering world generation, the model,
//! training, planning, and routing, with full-key validation.
//!
//! Every field has a default, so `{}` is a valid config. Unknown keys are
//! rejected with the offending key named. Command-line flags override file
//! values, which override the built-in defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use latentnav::error::{Error, Result};
use latentnav::planner::PlannerConfig;
use latentnav::vae::{ModelConfig, TrainConfig};
use latentnav::world::WorldConfig;

/// Route-matching and evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoutingConfig {
    /// Histogram bins for evaluation reports.
    pub bins: usize,
    /// Latent nearest neighbors per node in the frame graph.
    pub knn: usize,
    /// Random-baseline seed for evaluation statistics.
    pub eval_seed: u64,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        RoutingConfig {
            bins: 10,
            knn: 4,
            eval_seed: 1,
        }
    }
}

impl RoutingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::config("routing.bins", "must be at least 1"));
        }
        if self.knn == 0 {
            return Err(Error::config("routing.knn", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub world: WorldConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub planner: PlannerConfig,
    pub routing: RoutingConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.planner.validate()?;
        self.routing.validate()
    }
}
