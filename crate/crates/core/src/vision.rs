//! Object recognition contract.
//!
//! The orchestrator only needs a top-1 label and a confidence for a
//! captured view. [`VisionService`] is implemented by the HTTP client in the
//! service crate and by [`StubRecognizer`], a deterministic fixture table
//! with sampled latencies used for simulation and desk-scale runs.
//!
//! Wire format of a recognition endpoint (`POST /v1/recognize`):
//! request `{"scene_ref": "..."}`, response `{"label": "...", "confidence": 0.92}`.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latency::{LatencySampler, NormalLatency};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecognitionRequest {
    pub scene_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionResult {
    pub label: String,
    pub confidence: f64,
}

impl RecognitionResult {
    /// The "not recognised" answer: empty label, zero confidence.
    pub fn miss() -> Self {
        Self { label: String::new(), confidence: 0.0 }
    }

    pub fn is_miss(&self) -> bool {
        self.label.is_empty() || self.confidence <= 0.0
    }

    pub fn validate(&self) -> Result<(), VisionError> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(VisionError::MalformedResponse(format!("confidence {} outside [0, 1]", self.confidence)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub endpoint_url: String,
    pub timeout: f64,
    pub retries: u32,
    /// Latency the orchestrator plans for when deciding on a filler.
    pub expected_latency: f64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://127.0.0.1:8080/v1/recognize".to_owned(),
            timeout: 10.0,
            retries: 1,
            expected_latency: 5.35,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), VisionError> {
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(VisionError::Config(format!("timeout must be positive, got {}", self.timeout)));
        }
        if self.endpoint_url.trim().is_empty() {
            return Err(VisionError::Config("endpoint_url must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VisionError {
    #[error("recognition timed out after {elapsed:.3} s")]
    Timeout { elapsed: f64 },
    #[error("recognition endpoint returned {status}: {body}")]
    EndpointError { status: u16, body: String },
    #[error("malformed recognition response: {0}")]
    MalformedResponse(String),
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
}

impl VisionError {
    /// Time the failed call consumed, for metrics.
    pub fn elapsed(&self) -> f64 {
        match self {
            VisionError::Timeout { elapsed } => *elapsed,
            _ => 0.0,
        }
    }
}

/// A completed recognition with the time it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Recognized {
    pub result: RecognitionResult,
    pub elapsed: f64,
}

pub trait VisionService: Send {
    fn recognize(&mut self, request: &RecognitionRequest) -> Result<Recognized, VisionError>;

    /// Planned latency used for masking decisions.
    fn expected_latency(&self) -> f64;
}

/// Fixture table plus latency sampler shared by the in-process stub and the
/// stub HTTP endpoint.
#[derive(Debug)]
pub struct StubEndpoint {
    fixtures: BTreeMap<String, RecognitionResult>,
    sampler: LatencySampler,
}

impl StubEndpoint {
    pub fn new(fixtures: BTreeMap<String, RecognitionResult>, latency: NormalLatency, seed: u64) -> Self {
        Self { fixtures, sampler: LatencySampler::new(latency, seed) }
    }

    pub fn fixtures(&self) -> &BTreeMap<String, RecognitionResult> {
        &self.fixtures
    }

    pub fn mean_latency(&self) -> f64 {
        self.sampler.mean()
    }

    /// Looks up `scene_ref` and draws the latency for this request.
    /// Unknown scenes get [`RecognitionResult::miss`].
    pub fn handle(&mut self, scene_ref: &str) -> (RecognitionResult, f64) {
        let result = self.fixtures.get(scene_ref).cloned().unwrap_or_else(RecognitionResult::miss);
        (result, self.sampler.sample())
    }
}

/// In-process recogniser on the simulated clock.
///
/// Clones share the endpoint (and its latency stream) and the call counter,
/// like several sessions hitting one cloud endpoint.
#[derive(Debug, Clone)]
pub struct StubRecognizer {
    endpoint: Arc<Mutex<StubEndpoint>>,
    calls: Arc<AtomicUsize>,
    timeout: f64,
}

impl StubRecognizer {
    pub fn new(endpoint: StubEndpoint, timeout: f64) -> Self {
        Self { endpoint: Arc::new(Mutex::new(endpoint)), calls: Arc::new(AtomicUsize::new(0)), timeout }
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl VisionService for StubRecognizer {
    fn recognize(&mut self, request: &RecognitionRequest) -> Result<Recognized, VisionError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let (result, latency) = self.endpoint.lock().expect("stub endpoint poisoned").handle(&request.scene_ref);
        if latency > self.timeout {
            return Err(VisionError::Timeout { elapsed: self.timeout });
        }
        Ok(Recognized { result, elapsed: latency })
    }

    fn expected_latency(&self) -> f64 {
        self.endpoint.lock().expect("stub endpoint poisoned").mean_latency()
    }
}

/// Parses a recognition response body.
pub fn parse_response(body: &str) -> Result<RecognitionResult, VisionError> {
    if body.trim().is_empty() {
        return Err(VisionError::MalformedResponse("empty body".into()));
    }
    let result: RecognitionResult =
        serde_json::from_str(body).map_err(|e| VisionError::MalformedResponse(e.to_string()))?;
    result.validate()?;
    Ok(result)
}
