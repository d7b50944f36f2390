use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::routing::features::RelayQuery;

/// Probability at or above which a peer is treated as a good relay.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: u8,
    pub probability: f64,
}

impl Prediction {
    pub fn from_probability(probability: f64) -> Self {
        Prediction { label: u8::from(probability >= DECISION_THRESHOLD), probability }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictorError {
    /// The backend could not be reached in time; callers fall back to plain spraying.
    #[error("predictor unavailable: {0}")]
    Unavailable(String),
    #[error("predictor rejected the query: {0}")]
    Rejected(String),
}

/// Relay classifier backend. Called sequentially from a single simulation run.
pub trait Predictor {
    fn predict(&mut self, query: &RelayQuery) -> Result<Prediction, PredictorError>;
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn predict(&mut self, query: &RelayQuery) -> Result<Prediction, PredictorError> {
        (**self).predict(query)
    }
}

/// Always answers the same label with certainty.
#[derive(Clone, Copy, Debug)]
pub struct ConstantPredictor(pub u8);

impl Predictor for ConstantPredictor {
    fn predict(&mut self, _query: &RelayQuery) -> Result<Prediction, PredictorError> {
        Ok(Prediction { label: self.0, probability: f64::from(self.0) })
    }
}

/// A backend that is never reachable.
#[derive(Clone, Copy, Debug, Default)]
pub struct UnavailablePredictor;

impl Predictor for UnavailablePredictor {
    fn predict(&mut self, _query: &RelayQuery) -> Result<Prediction, PredictorError> {
        Err(PredictorError::Unavailable("service down".into()))
    }
}

/// Adapts a closure returning a probability.
pub struct FnPredictor<F>(pub F);

impl<F: FnMut(&RelayQuery) -> f64> Predictor for FnPredictor<F> {
    fn predict(&mut self, query: &RelayQuery) -> Result<Prediction, PredictorError> {
        Ok(Prediction::from_probability((self.0)(query)))
    }
}

/// Counts calls to an inner predictor.
pub struct CountingPredictor<P> {
    pub inner: P,
    pub calls: u64,
}

impl<P: Predictor> CountingPredictor<P> {
    pub fn new(inner: P) -> Self {
        CountingPredictor { inner, calls: 0 }
    }
}

impl<P: Predictor> Predictor for CountingPredictor<P> {
    fn predict(&mut self, query: &RelayQuery) -> Result<Prediction, PredictorError> {
        self.calls += 1;
        self.inner.predict(query)
    }
}
