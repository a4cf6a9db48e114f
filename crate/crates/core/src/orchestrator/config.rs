use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsm::FsmConfig;
use crate::latency::ProcessingModel;
use crate::vision::EndpointConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub fsm: FsmConfig,
    pub vision: EndpointConfig,
    /// Expected recognition latency above which a filler is played.
    pub filler_threshold: f64,
    pub filler_texts: Vec<String>,
    /// Upper bound on engine-side work per query.
    pub processing_budget: f64,
    pub placement_threshold: f64,
    pub anchor_radius: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            fsm: FsmConfig::default(),
            vision: EndpointConfig::default(),
            filler_threshold: 2.5,
            filler_texts: vec![
                "let me see, let me think about it".to_owned(),
                "hmm, let me have a closer look".to_owned(),
            ],
            processing_budget: 1.5,
            placement_threshold: crate::anchor::DEFAULT_PLACEMENT_THRESHOLD,
            anchor_radius: 0.35,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot parse engine config: {0}")]
    Parse(String),
    #[error("invalid engine config: {0}")]
    Invalid(String),
    #[error("environment override {var}={value:?} is not valid")]
    BadOverride { var: &'static str, value: String },
}

pub const ENV_VISION_URL: &str = "DOCENT_VISION_URL";
pub const ENV_VISION_TIMEOUT: &str = "DOCENT_VISION_TIMEOUT";
pub const ENV_VISION_RETRIES: &str = "DOCENT_VISION_RETRIES";

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: EngineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("engine config is always serialisable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.fsm.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.vision.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (field, value) in [
            ("filler_threshold", self.filler_threshold),
            ("processing_budget", self.processing_budget),
            ("anchor_radius", self.anchor_radius),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::Invalid(format!("{field} must be positive, got {value}")));
            }
        }
        if !(0.0..=1.0).contains(&self.placement_threshold) {
            return Err(ConfigError::Invalid(format!(
                "placement_threshold must lie in [0, 1], got {}",
                self.placement_threshold
            )));
        }
        if self.filler_texts.iter().all(|t| t.trim().is_empty()) {
            return Err(ConfigError::Invalid("filler_texts needs at least one non-empty entry".into()));
        }
        Ok(())
    }

    /// Checks that configured engine-side work fits the processing budget.
    pub fn check_processing(&self, processing: &ProcessingModel) -> Result<(), ConfigError> {
        for (kind, value) in [
            ("anchor_load", processing.anchor_load),
            ("general", processing.general),
            ("object_query", processing.object_query),
        ] {
            if value > self.processing_budget {
                return Err(ConfigError::Invalid(format!(
                    "processing.{kind} = {value} s exceeds processing_budget {} s",
                    self.processing_budget
                )));
            }
        }
        Ok(())
    }

    /// Applies endpoint overrides from the process environment.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        self.apply_overrides(|var| std::env::var(var).ok())
    }

    pub fn apply_overrides(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(url) = lookup(ENV_VISION_URL) {
            self.vision.endpoint_url = url;
        }
        if let Some(value) = lookup(ENV_VISION_TIMEOUT) {
            self.vision.timeout = value
                .parse()
                .ok()
                .filter(|t: &f64| *t > 0.0)
                .ok_or(ConfigError::BadOverride { var: ENV_VISION_TIMEOUT, value })?;
        }
        if let Some(value) = lookup(ENV_VISION_RETRIES) {
            self.vision.retries = value.parse().map_err(|_| ConfigError::BadOverride { var: ENV_VISION_RETRIES, value })?;
        }
        Ok(())
    }
}
