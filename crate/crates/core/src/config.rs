//! TOML scenario configuration. Every section and key is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::TrainingPlan;
use crate::qot::{FiberParams, Modulation};
use crate::rsa::{CostWeights, EngineConfig, GateMode};
use crate::video::GopModel;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub topology: String,
    pub slot_count: usize,
    /// Departure rate; arrivals run at load * mu.
    pub mu: f64,
    pub load_points: Vec<f64>,
    pub video_probability: f64,
    pub slot_demand_min: usize,
    pub slot_demand_max: usize,
    pub total_requests: usize,
    /// Defaults to 10% of `total_requests`.
    pub warmup_requests: Option<usize>,
    pub u_th: f64,
    pub seed: u64,
    /// Validate the grid after every event (slow).
    pub check_invariants: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            topology: "nsfnet".to_string(),
            slot_count: 128,
            mu: 1.0,
            load_points: vec![100.0, 200.0, 300.0, 400.0, 500.0, 600.0],
            video_probability: 0.8,
            slot_demand_min: 1,
            slot_demand_max: 10,
            total_requests: 20_000,
            warmup_requests: None,
            u_th: 20.0,
            seed: 1,
            check_invariants: false,
        }
    }
}

impl ScenarioConfig {
    pub fn warmup(&self) -> usize {
        self.warmup_requests.unwrap_or(self.total_requests / 10)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Invalid(m));
        if self.slot_count == 0 {
            return fail("slot_count must be positive".into());
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return fail(format!("mu must be positive, got {}", self.mu));
        }
        if let Some(l) = self.load_points.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return fail(format!("load points must be positive, got {l}"));
        }
        if !(0.0..=1.0).contains(&self.video_probability) {
            return fail(format!("video_probability {} outside [0, 1]", self.video_probability));
        }
        if self.slot_demand_min == 0
            || self.slot_demand_min > self.slot_demand_max
            || self.slot_demand_max > self.slot_count
        {
            return fail(format!(
                "slot demand range [{}, {}] invalid for {} slots",
                self.slot_demand_min, self.slot_demand_max, self.slot_count
            ));
        }
        if self.total_requests <= self.warmup() {
            return fail(format!(
                "total_requests {} must exceed warmup {}",
                self.total_requests,
                self.warmup()
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingConfig {
    pub k: usize,
    pub modulation: Modulation,
    pub gate: GateMode,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        let e = EngineConfig::default();
        RoutingConfig {
            k: e.k,
            modulation: e.modulation,
            gate: e.gate,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioConfig,
    pub weights: CostWeights,
    pub routing: RoutingConfig,
    pub fiber: FiberParams,
    pub gop: GopModel,
    pub training: TrainingPlan,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario.validate()?;
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.weights.validate().map_err(|e| invalid(&e))?;
        self.fiber.validate().map_err(|e| invalid(&e))?;
        self.gop.validate().map_err(|e| invalid(&e))?;
        if self.routing.k == 0 {
            return Err(ConfigError::Invalid("k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            k: self.routing.k,
            weights: self.weights,
            modulation: self.routing.modulation,
            gate: self.routing.gate,
        }
    }
}
