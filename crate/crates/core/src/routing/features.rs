//! Per-node statistics kept during a run and the relay-quality query built from them.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::node::NodeId;

/// The seven relay-quality features, in classifier input order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelayQuery {
    pub contact_freq: f64,
    pub degree: f64,
    pub avg_contact_duration: f64,
    pub avg_hop_count: f64,
    pub avg_delivery_time: f64,
    pub as_relay_count: f64,
    pub as_destination_count: f64,
}

impl RelayQuery {
    pub const FIELDS: [&'static str; 7] = [
        "contact_freq",
        "degree",
        "avg_contact_duration",
        "avg_hop_count",
        "avg_delivery_time",
        "as_relay_count",
        "as_destination_count",
    ];

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.contact_freq,
            self.degree,
            self.avg_contact_duration,
            self.avg_hop_count,
            self.avg_delivery_time,
            self.as_relay_count,
            self.as_destination_count,
        ]
    }

    pub fn from_array(v: [f64; 7]) -> Self {
        RelayQuery {
            contact_freq: v[0],
            degree: v[1],
            avg_contact_duration: v[2],
            avg_hop_count: v[3],
            avg_delivery_time: v[4],
            as_relay_count: v[5],
            as_destination_count: v[6],
        }
    }

    /// Name of the first field that is negative or not finite.
    pub fn invalid_field(&self) -> Option<&'static str> {
        Self::FIELDS
            .iter()
            .zip(self.to_array())
            .find(|(_, v)| !(v.is_finite() && *v >= 0.0))
            .map(|(name, _)| *name)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContactHistory {
    started: u64,
    partners: HashSet<NodeId>,
    open: HashMap<NodeId, f64>,
    open_start_sum: f64,
    closed_duration: f64,
}

impl ContactHistory {
    pub fn link_up(&mut self, peer: NodeId, now: f64) {
        self.started += 1;
        self.partners.insert(peer);
        self.open.insert(peer, now);
        self.open_start_sum += now;
    }

    pub fn link_down(&mut self, peer: NodeId, now: f64) {
        if let Some(start) = self.open.remove(&peer) {
            self.open_start_sum -= start;
            self.closed_duration += now - start;
        }
    }

    /// Contacts seen so far, including ones still in progress.
    pub fn frequency(&self) -> u64 {
        self.started
    }

    pub fn degree(&self) -> usize {
        self.partners.len()
    }

    /// Mean contact length with open contacts closed at `now`.
    pub fn mean_duration(&self, now: f64) -> f64 {
        if self.started == 0 {
            return 0.0;
        }
        let open_total = self.open.len() as f64 * now - self.open_start_sum;
        (self.closed_duration + open_total) / self.started as f64
    }
}

/// Delivery statistics a node reports about messages it relayed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RelayHistory {
    pub relayed: u64,
    pub hop_sum: f64,
    pub delay_sum: f64,
    pub destination: u64,
}

impl RelayHistory {
    pub fn record_relay(&mut self, hopcount: u32, delivery_time: f64) {
        self.relayed += 1;
        self.hop_sum += f64::from(hopcount);
        self.delay_sum += delivery_time;
    }

    pub fn mean_hops(&self) -> Option<f64> {
        (self.relayed > 0).then(|| self.hop_sum / self.relayed as f64)
    }

    pub fn mean_delay(&self) -> Option<f64> {
        (self.relayed > 0).then(|| self.delay_sum / self.relayed as f64)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeStats {
    pub contacts: ContactHistory,
    pub relays: RelayHistory,
}

/// Values substituted for delivery statistics a node cannot report yet, taken
/// from the training split and shipped with the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDefaults {
    pub avg_hop_count: f64,
    pub avg_delivery_time: f64,
    /// Stands in for the relay count of a peer with no relay history yet.
    #[serde(default)]
    pub as_relay_count: f64,
}

/// Relay query for `peer` as of `now`.
///
/// Contact features come from the peer's contact history (open contacts are
/// closed at `now`); hop count and delay are the peer's running averages over
/// relayed-then-delivered messages. A peer with no such messages reports none
/// of its relay statistics, and the shipped defaults are used for all three.
pub fn online_features(peer: &NodeStats, now: f64, defaults: &FeatureDefaults) -> RelayQuery {
    RelayQuery {
        contact_freq: peer.contacts.frequency() as f64,
        degree: peer.contacts.degree() as f64,
        avg_contact_duration: peer.contacts.mean_duration(now),
        avg_hop_count: peer.relays.mean_hops().unwrap_or(defaults.avg_hop_count),
        avg_delivery_time: peer.relays.mean_delay().unwrap_or(defaults.avg_delivery_time),
        as_relay_count: if peer.relays.relayed > 0 { peer.relays.relayed as f64 } else { defaults.as_relay_count },
        as_destination_count: peer.relays.destination as f64,
    }
}

/// Scales the counting features observed over `now` seconds up to a run of
/// `horizon` seconds, so that partial-run counters are comparable with the
/// whole-run totals a model was trained on. Averages and the degree, which
/// saturates quickly, are left alone. The
/// observation window is floored at `min_window` to keep early estimates sane.
pub fn project_to_horizon(query: RelayQuery, now: f64, horizon: f64, min_window: f64) -> RelayQuery {
    let window = now.max(min_window).max(f64::MIN_POSITIVE);
    if window >= horizon {
        return query;
    }
    let scale = horizon / window;
    RelayQuery {
        contact_freq: query.contact_freq * scale,
        as_relay_count: query.as_relay_count * scale,
        as_destination_count: query.as_destination_count * scale,
        ..query
    }
}
