use std::time::{Duration, Instant};

use docent_core::vision::{parse_response, EndpointConfig, RecognitionRequest, Recognized, VisionError, VisionService};
use tracing::warn;

/// Recognition over HTTP with a wall-clock timeout and bounded retries.
///
/// The timeout covers all attempts together. Elapsed time is measured on the
/// monotonic clock.
pub struct HttpRecognizer {
    client: reqwest::blocking::Client,
    config: EndpointConfig,
}

impl HttpRecognizer {
    /// Builds a blocking client; call from a plain thread, not from async code.
    pub fn new(config: EndpointConfig) -> Result<Self, VisionError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| VisionError::Config(e.to_string()))?;
        Ok(Self { client, config })
    }
}

impl VisionService for HttpRecognizer {
    fn recognize(&mut self, request: &RecognitionRequest) -> Result<Recognized, VisionError> {
        let budget = Duration::from_secs_f64(self.config.timeout);
        let start = Instant::now();
        let mut last_error = None;
        for attempt in 0..=self.config.retries {
            let left = budget.saturating_sub(start.elapsed());
            if left.is_zero() {
                break;
            }
            let sent = self.client.post(&self.config.endpoint_url).json(request).timeout(left).send();
            let error = match sent {
                Ok(response) => {
                    let status = response.status();
                    let body = response.text().unwrap_or_default();
                    if status.is_success() {
                        let result = parse_response(&body)?;
                        return Ok(Recognized { result, elapsed: start.elapsed().as_secs_f64() });
                    }
                    let error = VisionError::EndpointError { status: status.as_u16(), body };
                    if status.is_client_error() {
                        return Err(error);
                    }
                    error
                }
                Err(e) if e.is_timeout() => break,
                Err(e) => VisionError::EndpointError { status: 0, body: e.to_string() },
            };
            warn!(attempt, %error, "recognition attempt failed");
            last_error = Some(error);
        }
        let elapsed = start.elapsed().as_secs_f64();
        match last_error {
            Some(error) if elapsed < self.config.timeout => Err(error),
            _ => Err(VisionError::Timeout { elapsed }),
        }
    }

    fn expected_latency(&self) -> f64 {
        self.config.expected_latency
    }
}
