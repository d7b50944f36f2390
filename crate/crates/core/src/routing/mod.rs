//! Forwarding decisions made when two nodes are in contact.

pub mod cache;
pub mod features;
pub mod predictor;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::node::NodeId;
use crate::sim::buffer::{Buffer, MessageId};

pub use cache::DecisionCache;
pub use features::{online_features, project_to_horizon, FeatureDefaults, NodeStats, RelayQuery};
pub use predictor::{Prediction, Predictor, PredictorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RouterKind {
    Epidemic,
    SprayAndWait,
    Random,
    MlGated,
}

impl RouterKind {
    pub const ALL: [RouterKind; 4] =
        [RouterKind::Epidemic, RouterKind::SprayAndWait, RouterKind::Random, RouterKind::MlGated];

    /// Name used in reports and result tables.
    pub fn label(self) -> &'static str {
        match self {
            RouterKind::Epidemic => "EpidemicRouter",
            RouterKind::SprayAndWait => "SprayAndWaitRouter",
            RouterKind::Random => "RandomRouter",
            RouterKind::MlGated => "MLPBasedRouter",
        }
    }

    /// Short name used on the command line.
    pub fn cli_name(self) -> &'static str {
        match self {
            RouterKind::Epidemic => "epidemic",
            RouterKind::SprayAndWait => "spray",
            RouterKind::Random => "random",
            RouterKind::MlGated => "ml",
        }
    }
}

impl fmt::Display for RouterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for RouterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        RouterKind::ALL
            .into_iter()
            .find(|r| r.cli_name().eq_ignore_ascii_case(s) || r.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown router `{s}` (expected epidemic, spray, random or ml)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ForwardKind {
    /// Hand the message to its destination.
    Deliver,
    /// Hand over part of the spray copies.
    Spray,
    /// Copy an unlimited replica.
    Flood,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Forward {
    pub message: MessageId,
    pub kind: ForwardKind,
}

/// What the sender can see of the node it is in contact with.
#[derive(Clone, Copy)]
pub struct PeerView<'a> {
    pub id: NodeId,
    /// Whether the peer stores and carries messages for others.
    pub relays: bool,
    pub buffer: &'a Buffer,
    /// Messages the peer already received as their destination.
    pub received: &'a HashSet<MessageId>,
}

impl PeerView<'_> {
    pub fn lacks(&self, id: MessageId) -> bool {
        !self.buffer.contains(id) && !self.received.contains(&id)
    }
}

/// Copies kept and given when a replica holding `copies` sprays once.
pub fn split_copies(copies: u32, binary: bool) -> (u32, u32) {
    if binary {
        (copies.div_ceil(2), copies / 2)
    } else {
        (copies - 1, 1)
    }
}

fn deliveries(sender: &Buffer, peer: &PeerView<'_>) -> Vec<Forward> {
    sender
        .entries()
        .iter()
        .filter(|e| e.message.destination == peer.id && !peer.received.contains(&e.message.id))
        .map(|e| Forward { message: e.message.id, kind: ForwardKind::Deliver })
        .collect()
}

/// Deliveries to the peer, then a copy of every other message it lacks.
pub fn epidemic_on_contact(sender: &Buffer, peer: &PeerView<'_>) -> Vec<Forward> {
    let mut out = deliveries(sender, peer);
    if peer.relays {
        out.extend(
            sender
                .entries()
                .iter()
                .filter(|e| e.message.destination != peer.id && peer.lacks(e.message.id))
                .map(|e| Forward { message: e.message.id, kind: ForwardKind::Flood }),
        );
    }
    out
}

/// Deliveries to the peer, then spray hand-overs of every replica with more
/// than one copy that the peer lacks. `allow_relay` is consulted at most once,
/// and only when some replica is eligible; a refusal suppresses all hand-overs.
pub fn spray_on_contact(
    sender: &Buffer,
    peer: &PeerView<'_>,
    allow_relay: &mut dyn FnMut() -> bool,
) -> Vec<Forward> {
    let mut out = deliveries(sender, peer);
    if !peer.relays {
        return out;
    }
    let eligible: Vec<Forward> = sender
        .entries()
        .iter()
        .filter(|e| e.message.destination != peer.id && e.message.copies > 1 && peer.lacks(e.message.id))
        .map(|e| Forward { message: e.message.id, kind: ForwardKind::Spray })
        .collect();
    if !eligible.is_empty() && allow_relay() {
        out.extend(eligible);
    }
    out
}

/// Spray-and-wait gated by a fair coin per contact.
pub fn random_on_contact(sender: &Buffer, peer: &PeerView<'_>, rng: &mut impl Rng) -> Vec<Forward> {
    spray_on_contact(sender, peer, &mut || rng.gen_bool(0.5))
}

/// Spray-and-wait gated by the relay classifier.
pub fn ml_on_contact(
    sender: &Buffer,
    peer: &PeerView<'_>,
    peer_stats: &NodeStats,
    now: f64,
    gate: &mut MlGate<'_>,
) -> Vec<Forward> {
    spray_on_contact(sender, peer, &mut || gate.decide(peer.id, peer_stats, now))
}

/// Coin-flip gate state for [`RouterKind::Random`].
pub struct CoinGate {
    pub rng: ChaCha8Rng,
}

impl CoinGate {
    pub fn flip(&mut self) -> bool {
        self.rng.gen_bool(0.5)
    }
}

/// Lowest observation window used when scaling partial counters to the
/// training horizon, seconds.
pub const MIN_PROJECTION_WINDOW: f64 = 600.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounters {
    /// Relay decisions taken.
    pub decisions: u64,
    pub relayed: u64,
    pub predictor_calls: u64,
    pub cache_hits: u64,
    /// Decisions that fell back to plain spraying because the predictor failed.
    pub fallbacks: u64,
}

/// Classifier-backed relay gate with a decision cache.
pub struct MlGate<'p> {
    predictor: &'p mut dyn Predictor,
    defaults: FeatureDefaults,
    horizon: Option<f64>,
    cache: DecisionCache,
    counters: GateCounters,
}

impl<'p> MlGate<'p> {
    pub fn new(predictor: &'p mut dyn Predictor, defaults: FeatureDefaults, horizon: Option<f64>) -> Self {
        MlGate { predictor, defaults, horizon, cache: DecisionCache::default(), counters: GateCounters::default() }
    }

    pub fn with_cache(mut self, cache: DecisionCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn counters(&self) -> GateCounters {
        self.counters
    }

    /// The query the classifier sees for `peer` at `now`.
    pub fn query(&self, peer_stats: &NodeStats, now: f64) -> RelayQuery {
        let q = online_features(peer_stats, now, &self.defaults);
        let mut q = match self.horizon {
            Some(h) => project_to_horizon(q, now, h, MIN_PROJECTION_WINDOW),
            None => q,
        };
        if peer_stats.relays.relayed == 0 {
            // already at training scale
            q.as_relay_count = self.defaults.as_relay_count;
        }
        q
    }

    pub fn decide(&mut self, peer: NodeId, peer_stats: &NodeStats, now: f64) -> bool {
        self.counters.decisions += 1;
        let query = self.query(peer_stats, now);
        let allow = match self.cache.get(peer, &query, now) {
            Some(p) => {
                self.counters.cache_hits += 1;
                p.label == 1
            }
            None => {
                self.counters.predictor_calls += 1;
                match self.predictor.predict(&query) {
                    Ok(p) => {
                        self.cache.insert(peer, &query, p, now);
                        p.label == 1
                    }
                    Err(_) => {
                        self.counters.fallbacks += 1;
                        true
                    }
                }
            }
        };
        if allow {
            self.counters.relayed += 1;
        }
        allow
    }
}
