//! Relay-quality inference over HTTP.
//!
//! `POST /predict` takes the seven raw features as a JSON object and answers
//! with `{"label", "probability", "model_version"}`; `GET /health` reports the
//! loaded model and request counters. [`HttpPredictor`] is the blocking client
//! the simulator's gate uses; [`predict_inprocess`] gives the same answer
//! without a network hop.

mod client;
mod server;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use dtnlab_core::ml::ModelArtifact;
use dtnlab_core::routing::RelayQuery;

pub use client::{HttpPredictor, DEFAULT_TIMEOUT};
pub use server::{app, serve, spawn, AppState, ServerHandle, ServiceStats};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub label: u8,
    pub probability: f64,
    pub model_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model_version: String,
    pub requests: u64,
    pub rejected: u64,
    /// Mean handler-side model evaluation time, seconds.
    pub mean_inference_seconds: f64,
}

/// A rejected request body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyError {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl BodyError {
    fn new(field: Option<&str>, error: String) -> Self {
        BodyError { error, field: field.map(str::to_string) }
    }
}

/// Parses and checks a predict body, naming the first offending field.
pub fn parse_request(body: &[u8]) -> Result<RelayQuery, BodyError> {
    let value: Value =
        serde_json::from_slice(body).map_err(|e| BodyError::new(None, format!("body is not valid JSON: {e}")))?;
    let Value::Object(obj) = value else {
        return Err(BodyError::new(None, "body must be a JSON object".into()));
    };
    check_fields(&obj)?;
    let mut v = [0.0; 7];
    for (slot, name) in v.iter_mut().zip(RelayQuery::FIELDS) {
        let x = match obj.get(name) {
            None => return Err(BodyError::new(Some(name), format!("missing field `{name}`"))),
            Some(x) => x.as_f64().ok_or_else(|| BodyError::new(Some(name), format!("`{name}` must be a number")))?,
        };
        if !(x.is_finite() && x >= 0.0) {
            return Err(BodyError::new(Some(name), format!("`{name}` must be finite and non-negative")));
        }
        *slot = x;
    }
    Ok(RelayQuery::from_array(v))
}

fn check_fields(obj: &Map<String, Value>) -> Result<(), BodyError> {
    match obj.keys().find(|k| !RelayQuery::FIELDS.contains(&k.as_str())) {
        Some(k) => Err(BodyError::new(Some(k), format!("unknown field `{k}`"))),
        None => Ok(()),
    }
}

pub fn predict_inprocess(model: &ModelArtifact, query: &RelayQuery) -> PredictResponse {
    let p = model.predict(query);
    PredictResponse { label: p.label, probability: p.probability, model_version: model.model_version.clone() }
}
