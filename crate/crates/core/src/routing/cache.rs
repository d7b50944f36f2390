use std::collections::HashMap;

use crate::node::NodeId;
use crate::routing::features::RelayQuery;
use crate::routing::predictor::Prediction;

/// Decisions are keyed on the feature vector rounded to this many decimals.
pub const CACHE_DECIMALS: i32 = 3;
pub const DEFAULT_CACHE_TTL: f64 = 300.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CacheKey {
    peer: NodeId,
    features: [i64; 7],
}

impl CacheKey {
    pub fn new(peer: NodeId, query: &RelayQuery) -> Self {
        let scale = 10f64.powi(CACHE_DECIMALS);
        let features = query.to_array().map(|v| (v * scale).round() as i64);
        CacheKey { peer, features }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Cached {
    prediction: Prediction,
    cached_at: f64,
}

/// Predictions remembered per (peer, quantized features) for `ttl` seconds of
/// simulated time.
#[derive(Clone, Debug)]
pub struct DecisionCache {
    ttl: f64,
    entries: HashMap<CacheKey, Cached>,
    hits: u64,
    misses: u64,
}

impl Default for DecisionCache {
    fn default() -> Self {
        Self::new(DEFAULT_CACHE_TTL)
    }
}

impl DecisionCache {
    pub fn new(ttl: f64) -> Self {
        DecisionCache { ttl, entries: HashMap::new(), hits: 0, misses: 0 }
    }

    pub fn get(&mut self, peer: NodeId, query: &RelayQuery, now: f64) -> Option<Prediction> {
        let key = CacheKey::new(peer, query);
        match self.entries.get(&key) {
            Some(c) if now - c.cached_at <= self.ttl => {
                self.hits += 1;
                Some(c.prediction)
            }
            Some(_) => {
                self.entries.remove(&key);
                self.misses += 1;
                None
            }
            None => {
                self.misses += 1;
                None
            }
        }
    }

    pub fn insert(&mut self, peer: NodeId, query: &RelayQuery, prediction: Prediction, now: f64) {
        self.entries.insert(CacheKey::new(peer, query), Cached { prediction, cached_at: now });
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
