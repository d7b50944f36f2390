use rand::Rng;

use crate::node::NodeId;
use crate::sim::buffer::{Message, MessageId};

/// Emits messages from a single source at uniformly drawn intervals.
#[derive(Clone, Debug)]
pub struct TrafficGenerator {
    source: NodeId,
    destinations: Vec<NodeId>,
    /// Milliseconds, inclusive.
    interval: (u64, u64),
    size: (u64, u64),
    ttl: u64,
    copies: u32,
    next_at: Option<u64>,
    next_id: u32,
}

impl TrafficGenerator {
    pub fn new(
        source: NodeId,
        destinations: Vec<NodeId>,
        interval_ms: (u64, u64),
        size: (u64, u64),
        ttl_ms: u64,
        copies: u32,
    ) -> Self {
        assert!(!destinations.is_empty(), "traffic needs a destination");
        TrafficGenerator {
            source,
            destinations,
            interval: interval_ms,
            size,
            ttl: ttl_ms,
            copies,
            next_at: None,
            next_id: 1,
        }
    }

    /// Returns the message due at `now`, if any. The first message comes one
    /// interval after the start.
    pub fn generate_traffic(&mut self, now: u64, rng: &mut impl Rng) -> Option<Message> {
        let due = *self.next_at.get_or_insert_with(|| rng.gen_range(self.interval.0..=self.interval.1));
        if now < due {
            return None;
        }
        let id = MessageId(self.next_id);
        self.next_id += 1;
        let size = rng.gen_range(self.size.0..=self.size.1);
        let destination = self.destinations[rng.gen_range(0..self.destinations.len())];
        self.next_at = Some(due + rng.gen_range(self.interval.0..=self.interval.1));
        Some(Message {
            id,
            size,
            source: self.source,
            destination,
            created_at: now,
            ttl: self.ttl,
            copies: self.copies,
            path: vec![self.source],
        })
    }
}
