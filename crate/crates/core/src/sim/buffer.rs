use std::fmt;
use std::str::FromStr;

use crate::node::NodeId;

/// Message identifier; rendered as `AC<n>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MessageId(pub u32);

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AC{}", self.0)
    }
}

impl FromStr for MessageId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.strip_prefix("AC")
            .and_then(|n| n.parse().ok())
            .map(MessageId)
            .ok_or_else(|| format!("malformed message id `{s}`"))
    }
}

/// One replica of a message as held by a node.
#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub id: MessageId,
    pub size: u64,
    pub source: NodeId,
    pub destination: NodeId,
    /// Milliseconds.
    pub created_at: u64,
    pub ttl: u64,
    /// Spray copies this replica is responsible for.
    pub copies: u32,
    /// Hosts visited so far, starting at the source and ending at the holder.
    pub path: Vec<NodeId>,
}

impl Message {
    pub fn expired_at(&self, now: u64) -> bool {
        now.saturating_sub(self.created_at) > self.ttl
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub message: Message,
    /// When this replica entered the buffer, milliseconds.
    pub arrived_at: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Admission {
    Admitted,
    AdmittedWithEvictions(Vec<Entry>),
    Rejected(Message),
}

/// Byte-bounded store kept in arrival order.
#[derive(Clone, Debug)]
pub struct Buffer {
    capacity: u64,
    used: u64,
    entries: Vec<Entry>,
}

impl Buffer {
    pub fn new(capacity: u64) -> Self {
        Buffer { capacity, used: 0, entries: Vec::new() }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: MessageId) -> bool {
        self.entries.iter().any(|e| e.message.id == id)
    }

    pub fn get(&self, id: MessageId) -> Option<&Message> {
        self.entries.iter().find(|e| e.message.id == id).map(|e| &e.message)
    }

    pub fn get_mut(&mut self, id: MessageId) -> Option<&mut Message> {
        self.entries.iter_mut().find(|e| e.message.id == id).map(|e| &mut e.message)
    }

    /// Entries oldest first.
    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn remove(&mut self, id: MessageId) -> Option<Entry> {
        let pos = self.entries.iter().position(|e| e.message.id == id)?;
        let entry = self.entries.remove(pos);
        self.used -= entry.message.size;
        Some(entry)
    }
}

/// Stores `incoming`, evicting the oldest replicas (never `protected`, the one
/// currently being sent) until it fits. Rejects duplicates and messages that
/// cannot fit even after evicting everything evictable; a rejection leaves the
/// buffer untouched.
pub fn enforce_buffer(
    buffer: &mut Buffer,
    incoming: Message,
    now: u64,
    protected: Option<MessageId>,
) -> Admission {
    if buffer.contains(incoming.id) {
        return Admission::Rejected(incoming);
    }
    let evictable: u64 = buffer
        .entries
        .iter()
        .filter(|e| Some(e.message.id) != protected)
        .map(|e| e.message.size)
        .sum();
    if incoming.size > buffer.capacity - buffer.used + evictable {
        return Admission::Rejected(incoming);
    }
    let mut evicted = Vec::new();
    while buffer.capacity - buffer.used < incoming.size {
        let pos = buffer
            .entries
            .iter()
            .position(|e| Some(e.message.id) != protected)
            .expect("space accounted for above");
        let entry = buffer.entries.remove(pos);
        buffer.used -= entry.message.size;
        evicted.push(entry);
    }
    buffer.used += incoming.size;
    buffer.entries.push(Entry { message: incoming, arrived_at: now });
    if evicted.is_empty() {
        Admission::Admitted
    } else {
        Admission::AdmittedWithEvictions(evicted)
    }
}
