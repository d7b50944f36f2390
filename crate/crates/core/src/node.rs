//! Node identities as they appear in report files (`p13`, `c89`, `a110`, `h111`).

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeClass {
    Pedestrian,
    Car,
    Accident,
    Hospital,
}

impl NodeClass {
    pub fn prefix(self) -> char {
        match self {
            NodeClass::Pedestrian => 'p',
            NodeClass::Car => 'c',
            NodeClass::Accident => 'a',
            NodeClass::Hospital => 'h',
        }
    }

    pub fn from_prefix(c: char) -> Option<Self> {
        match c {
            'p' => Some(NodeClass::Pedestrian),
            'c' => Some(NodeClass::Car),
            'a' => Some(NodeClass::Accident),
            'h' => Some(NodeClass::Hospital),
            _ => None,
        }
    }

    /// Mobile nodes carry traffic for others; accident and hospital nodes only
    /// source and sink their own messages.
    pub fn is_mobile(self) -> bool {
        matches!(self, NodeClass::Pedestrian | NodeClass::Car)
    }
}

/// A node address: class prefix plus a network-wide index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId {
    pub class: NodeClass,
    pub index: u32,
}

impl NodeId {
    pub const fn new(class: NodeClass, index: u32) -> Self {
        NodeId { class, index }
    }

    pub const fn pedestrian(index: u32) -> Self {
        Self::new(NodeClass::Pedestrian, index)
    }

    pub const fn car(index: u32) -> Self {
        Self::new(NodeClass::Car, index)
    }

    pub const fn accident(index: u32) -> Self {
        Self::new(NodeClass::Accident, index)
    }

    pub const fn hospital(index: u32) -> Self {
        Self::new(NodeClass::Hospital, index)
    }
}

// Index first so that report writers order pairs the way the simulator numbers
// its hosts.
impl Ord for NodeId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.index
            .cmp(&other.index)
            .then(self.class.cmp(&other.class))
    }
}

impl PartialOrd for NodeId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.class.prefix(), self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid node name `{0}`")]
pub struct ParseNodeIdError(pub String);

impl FromStr for NodeId {
    type Err = ParseNodeIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseNodeIdError(s.to_string());
        let mut chars = s.chars();
        let class = chars.next().and_then(NodeClass::from_prefix).ok_or_else(err)?;
        let digits = chars.as_str();
        // Reject signs, whitespace and leading zeros so that parse/render round-trips.
        if digits.is_empty()
            || !digits.bytes().all(|b| b.is_ascii_digit())
            || (digits.len() > 1 && digits.starts_with('0'))
        {
            return Err(err());
        }
        let index = digits.parse().map_err(|_| err())?;
        Ok(NodeId { class, index })
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
