//! Seeded service latency models.
//!
//! Service round trips (recognition, chatbot) are drawn from normal
//! distributions truncated at zero; engine-side processing is a fixed cost
//! per query kind.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::QueryKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalLatency {
    pub mean: f64,
    pub stddev: f64,
}

impl NormalLatency {
    pub const fn new(mean: f64, stddev: f64) -> Self {
        Self { mean, stddev }
    }

    pub const fn fixed(value: f64) -> Self {
        Self { mean: value, stddev: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessingModel {
    pub anchor_load: f64,
    pub general: f64,
    pub object_query: f64,
}

impl ProcessingModel {
    pub fn for_kind(&self, kind: QueryKind) -> f64 {
        match kind {
            QueryKind::AnchorLoad => self.anchor_load,
            QueryKind::General => self.general,
            QueryKind::ObjectQuery => self.object_query,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub vision: NormalLatency,
    pub chatbot: NormalLatency,
    pub processing: ProcessingModel,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatencyError {
    #[error("{field}: mean and stddev must be finite and non-negative (mean {mean}, stddev {stddev})")]
    BadDistribution { field: &'static str, mean: f64, stddev: f64 },
    #[error("processing.{field} must be finite and non-negative, got {value}")]
    BadProcessing { field: &'static str, value: f64 },
    #[error("cannot parse latency model: {0}")]
    Parse(String),
}

impl LatencyModel {
    /// Calibration matching the reference response-time study: recognition
    /// N(5.35, 0.7), chatbot N(2.05, 0.5), processing 0.5 s for anchor loads
    /// and 1.0 s otherwise.
    pub fn calibrated() -> Self {
        Self {
            vision: NormalLatency::new(5.35, 0.7),
            chatbot: NormalLatency::new(2.05, 0.5),
            processing: ProcessingModel { anchor_load: 0.5, general: 1.0, object_query: 1.0 },
        }
    }

    pub fn zero() -> Self {
        Self {
            vision: NormalLatency::fixed(0.0),
            chatbot: NormalLatency::fixed(0.0),
            processing: ProcessingModel { anchor_load: 0.0, general: 0.0, object_query: 0.0 },
        }
    }

    pub fn validate(&self) -> Result<(), LatencyError> {
        for (field, d) in [("vision", self.vision), ("chatbot", self.chatbot)] {
            if !(d.mean.is_finite() && d.stddev.is_finite() && d.mean >= 0.0 && d.stddev >= 0.0) {
                return Err(LatencyError::BadDistribution { field, mean: d.mean, stddev: d.stddev });
            }
        }
        let p = self.processing;
        for (field, value) in [("anchor_load", p.anchor_load), ("general", p.general), ("object_query", p.object_query)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(LatencyError::BadProcessing { field, value });
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, LatencyError> {
        let model: LatencyModel = toml::from_str(text).map_err(|e| LatencyError::Parse(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("latency model is always serialisable")
    }
}

/// Deterministic sampler for one latency distribution.
#[derive(Debug, Clone)]
pub struct LatencySampler {
    dist: NormalLatency,
    normal: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl LatencySampler {
    pub fn new(dist: NormalLatency, seed: u64) -> Self {
        let normal = (dist.stddev > 0.0).then(|| Normal::new(dist.mean, dist.stddev).expect("validated distribution"));
        Self { dist, normal, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn mean(&self) -> f64 {
        self.dist.mean
    }

    /// Draws from the normal distribution truncated at zero by rejection.
    pub fn sample(&mut self) -> f64 {
        let Some(normal) = &self.normal else {
            return self.dist.mean.max(0.0);
        };
        for _ in 0..64 {
            let x = normal.sample(&mut self.rng);
            if x >= 0.0 {
                return x;
            }
        }
        0.0
    }
}

/// Derives an independent stream seed for `stream` from a run seed.
pub fn stream_seed(seed: u64, stream: &str) -> u64 {
    // FNV-1a over the stream name, mixed with the run seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
