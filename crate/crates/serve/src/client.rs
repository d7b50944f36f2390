use std::time::Duration;

use ureq::Agent;

use dtnlab_core::routing::{DecisionCache, Prediction, Predictor, PredictorError, RelayQuery};
use dtnlab_core::NodeId;

use crate::{BodyError, HealthResponse, PredictResponse};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_millis(50);

/// Blocking `/predict` client.
pub struct HttpPredictor {
    agent: Agent,
    base: String,
    /// Requests actually sent.
    pub network_calls: u64,
    pub last_version: Option<String>,
}

impl HttpPredictor {
    /// `endpoint` is `host:port` or a full `http://` base URL.
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        let config = Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .proxy(None)
            .build();
        let trimmed = endpoint.trim_end_matches('/');
        let base = if trimmed.contains("://") { trimmed.to_string() } else { format!("http://{trimmed}") };
        HttpPredictor { agent: config.into(), base, network_calls: 0, last_version: None }
    }

    pub fn request(&mut self, query: &RelayQuery) -> Result<PredictResponse, PredictorError> {
        self.network_calls += 1;
        let body = serde_json::to_string(query).expect("query serializes");
        let mut resp = self
            .agent
            .post(&format!("{}/predict", self.base))
            .header("content-type", "application/json")
            .send(body.as_str())
            .map_err(|e| PredictorError::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| PredictorError::Unavailable(e.to_string()))?;
        match status {
            200 => serde_json::from_str(&text).map_err(|e| PredictorError::Unavailable(format!("bad response: {e}"))),
            400..=499 => {
                let msg = serde_json::from_str::<BodyError>(&text).map_or(text, |e| e.error);
                Err(PredictorError::Rejected(format!("HTTP {status}: {msg}")))
            }
            _ => Err(PredictorError::Unavailable(format!("HTTP {status}"))),
        }
    }

    /// Answers from `cache` when a quantized match is fresh, otherwise asks
    /// the service and remembers the answer.
    pub fn predict_cached(
        &mut self,
        cache: &mut DecisionCache,
        peer: NodeId,
        query: &RelayQuery,
        now: f64,
    ) -> Result<Prediction, PredictorError> {
        if let Some(p) = cache.get(peer, query, now) {
            return Ok(p);
        }
        let p = self.predict(query)?;
        cache.insert(peer, query, p, now);
        Ok(p)
    }

    pub fn health(&mut self) -> Result<HealthResponse, PredictorError> {
        let mut resp = self
            .agent
            .get(&format!("{}/health", self.base))
            .call()
            .map_err(|e| PredictorError::Unavailable(e.to_string()))?;
        let text = resp.body_mut().read_to_string().map_err(|e| PredictorError::Unavailable(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| PredictorError::Unavailable(format!("bad response: {e}")))
    }
}

impl Predictor for HttpPredictor {
    fn predict(&mut self, query: &RelayQuery) -> Result<Prediction, PredictorError> {
        let r = self.request(query)?;
        self.last_version = Some(r.model_version);
        Ok(Prediction { label: r.label, probability: r.probability })
    }
}
