//! Text report formats exchanged between the simulator and the feature pipeline.
//!
//! Two of them follow the ONE simulator byte for byte:
//!
//! ```text
//! @0.10 p8 <-> p18 up                               (connectivity)
//! 2225.4000 AC29 550456 3 1361.4000 a110 p10 277 N a110->c89->c102->p10   (delivered)
//! ```
//!
//! The relay and buffer logs are auxiliary formats in the same style.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::node::NodeId;

pub const DELIVERED_HEADER: &str =
    "# time ID size hopcount deliveryTime fromHost toHost remainingTtl isResponse path";
pub const RELAY_HEADER: &str = "# time ID fromHost toHost";
pub const BUFFER_HEADER: &str = "# time host ID event residency";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ReportError {
    pub line: usize,
    pub message: String,
}

impl ReportError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        ReportError { line, message: message.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkChange {
    Up,
    Down,
}

impl fmt::Display for LinkChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkChange::Up => "up",
            LinkChange::Down => "down",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub time: f64,
    pub a: NodeId,
    pub b: NodeId,
    pub kind: LinkChange,
}

impl ContactEvent {
    pub fn new(time: f64, a: NodeId, b: NodeId, kind: LinkChange) -> Self {
        ContactEvent { time, a, b, kind }
    }

    /// The unordered endpoint pair, smaller id first.
    pub fn pair(&self) -> (NodeId, NodeId) {
        if self.a <= self.b {
            (self.a, self.b)
        } else {
            (self.b, self.a)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub time: f64,
    pub id: String,
    pub size: u64,
    pub hopcount: u32,
    pub delivery_time: f64,
    pub from_host: NodeId,
    pub to_host: NodeId,
    /// Whole minutes of TTL left at delivery.
    pub remaining_ttl: u32,
    pub is_response: bool,
    pub path: Vec<NodeId>,
}

impl DeliveryRecord {
    fn check(&self) -> Result<(), String> {
        if self.path.len() as u64 != u64::from(self.hopcount) + 1 {
            return Err(format!(
                "hopcount {} does not match a path of {} hops",
                self.hopcount,
                self.path.len().saturating_sub(1)
            ));
        }
        if self.path.first() != Some(&self.from_host) {
            return Err("path does not start at fromHost".into());
        }
        if self.path.last() != Some(&self.to_host) {
            return Err("path does not end at toHost".into());
        }
        if self.delivery_time > self.time {
            return Err("deliveryTime exceeds delivery timestamp".into());
        }
        Ok(())
    }
}

/// One completed transfer, including the final hop to a destination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelayRecord {
    pub time: f64,
    pub id: String,
    pub from: NodeId,
    pub to: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BufferEventKind {
    /// Message created and stored at its source.
    Created,
    /// Replica dropped by its holder after handing the message to the destination.
    Handoff,
    Evicted,
    Expired,
    /// Incoming replica refused by the buffer.
    Rejected,
}

impl BufferEventKind {
    fn as_str(self) -> &'static str {
        match self {
            BufferEventKind::Created => "created",
            BufferEventKind::Handoff => "handoff",
            BufferEventKind::Evicted => "evicted",
            BufferEventKind::Expired => "expired",
            BufferEventKind::Rejected => "rejected",
        }
    }

    /// Whether this event ends a replica's stay in a buffer.
    pub fn ends_residency(self) -> bool {
        matches!(
            self,
            BufferEventKind::Handoff | BufferEventKind::Evicted | BufferEventKind::Expired
        )
    }
}

impl FromStr for BufferEventKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "created" => BufferEventKind::Created,
            "handoff" => BufferEventKind::Handoff,
            "evicted" => BufferEventKind::Evicted,
            "expired" => BufferEventKind::Expired,
            "rejected" => BufferEventKind::Rejected,
            _ => return Err(()),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferEvent {
    pub time: f64,
    pub node: NodeId,
    pub id: String,
    pub kind: BufferEventKind,
    /// Seconds the replica spent in `node`'s buffer; zero for events that do
    /// not end a stay.
    pub residency: f64,
}

pub fn write_connectivity(events: &[ContactEvent]) -> String {
    let mut out = String::with_capacity(events.len() * 24);
    for e in events {
        let _ = writeln!(out, "@{:.2} {} <-> {} {}", e.time, e.a, e.b, e.kind);
    }
    out
}

fn parse_time(token: &str, line: usize) -> Result<f64, ReportError> {
    let t: f64 = token
        .parse()
        .map_err(|_| ReportError::new(line, format!("bad time `{token}`")))?;
    if !t.is_finite() || t < 0.0 {
        return Err(ReportError::new(line, format!("bad time `{token}`")));
    }
    Ok(t)
}

fn parse_node(token: &str, line: usize) -> Result<NodeId, ReportError> {
    token.parse().map_err(|e| ReportError::new(line, format!("{e}")))
}

fn parse_number<T: FromStr>(token: &str, what: &str, line: usize) -> Result<T, ReportError> {
    token
        .parse()
        .map_err(|_| ReportError::new(line, format!("bad {what} `{token}`")))
}

/// Non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn parse_connectivity(text: &str) -> Result<Vec<ContactEvent>, ReportError> {
    let mut events = Vec::new();
    for (n, line) in content_lines(text) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let [time, a, arrow, b, kind] = tokens[..] else {
            return Err(ReportError::new(n, "expected `@<time> <a> <-> <b> <up|down>`"));
        };
        let time = time
            .strip_prefix('@')
            .ok_or_else(|| ReportError::new(n, "missing `@` before time"))?;
        let time = parse_time(time, n)?;
        if arrow != "<->" {
            return Err(ReportError::new(n, "expected `<->` between hosts"));
        }
        let a = parse_node(a, n)?;
        let b = parse_node(b, n)?;
        if a == b {
            return Err(ReportError::new(n, format!("self contact on {a}")));
        }
        let kind = match kind {
            "up" => LinkChange::Up,
            "down" => LinkChange::Down,
            other => return Err(ReportError::new(n, format!("bad link state `{other}`"))),
        };
        events.push(ContactEvent { time, a, b, kind });
    }
    Ok(events)
}

fn join_path(path: &[NodeId]) -> String {
    let mut s = String::new();
    for (i, n) in path.iter().enumerate() {
        if i > 0 {
            s.push_str("->");
        }
        let _ = write!(s, "{n}");
    }
    s
}

pub fn write_delivered(records: &[DeliveryRecord]) -> String {
    let mut out = String::with_capacity(64 + records.len() * 80);
    out.push_str(DELIVERED_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{:.4} {} {} {} {:.4} {} {} {} {} {}",
            r.time,
            r.id,
            r.size,
            r.hopcount,
            r.delivery_time,
            r.from_host,
            r.to_host,
            r.remaining_ttl,
            if r.is_response { 'Y' } else { 'N' },
            join_path(&r.path),
        );
    }
    out
}

fn expect_header<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    header: &str,
) -> Result<(), ReportError> {
    match lines.next() {
        None => Err(ReportError::new(1, "missing header line")),
        Some((_, l)) if l == header => Ok(()),
        Some((n, l)) => Err(ReportError::new(n, format!("unexpected header `{l}`"))),
    }
}

pub fn parse_delivered(text: &str) -> Result<Vec<DeliveryRecord>, ReportError> {
    let mut lines = content_lines(text);
    expect_header(&mut lines, DELIVERED_HEADER)?;
    let mut records = Vec::new();
    for (n, line) in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 10 {
            return Err(ReportError::new(n, format!("expected 10 fields, found {}", tokens.len())));
        }
        let is_response = match tokens[8] {
            "Y" => true,
            "N" => false,
            other => return Err(ReportError::new(n, format!("bad isResponse `{other}`"))),
        };
        let path = tokens[9]
            .split("->")
            .map(|t| parse_node(t, n))
            .collect::<Result<Vec<_>, _>>()?;
        let record = DeliveryRecord {
            time: parse_time(tokens[0], n)?,
            id: tokens[1].to_string(),
            size: parse_number(tokens[2], "size", n)?,
            hopcount: parse_number(tokens[3], "hopcount", n)?,
            delivery_time: parse_time(tokens[4], n)?,
            from_host: parse_node(tokens[5], n)?,
            to_host: parse_node(tokens[6], n)?,
            remaining_ttl: parse_number(tokens[7], "remainingTtl", n)?,
            is_response,
            path,
        };
        record.check().map_err(|m| ReportError::new(n, m))?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_relays(records: &[RelayRecord]) -> String {
    let mut out = String::with_capacity(32 + records.len() * 28);
    out.push_str(RELAY_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{:.4} {} {} {}", r.time, r.id, r.from, r.to);
    }
    out
}

pub fn parse_relays(text: &str) -> Result<Vec<RelayRecord>, ReportError> {
    let mut lines = content_lines(text);
    expect_header(&mut lines, RELAY_HEADER)?;
    lines
        .map(|(n, line)| {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let [time, id, from, to] = tokens[..] else {
                return Err(ReportError::new(n, "expected 4 fields"));
            };
            Ok(RelayRecord {
                time: parse_time(time, n)?,
                id: id.to_string(),
                from: parse_node(from, n)?,
                to: parse_node(to, n)?,
            })
        })
        .collect()
}

pub fn write_buffer_events(events: &[BufferEvent]) -> String {
    let mut out = String::with_capacity(32 + events.len() * 36);
    out.push_str(BUFFER_HEADER);
    out.push('\n');
    for e in events {
        let _ = writeln!(
            out,
            "{:.4} {} {} {} {:.4}",
            e.time,
            e.node,
            e.id,
            e.kind.as_str(),
            e.residency
        );
    }
    out
}

pub fn parse_buffer_events(text: &str) -> Result<Vec<BufferEvent>, ReportError> {
    let mut lines = content_lines(text);
    expect_header(&mut lines, BUFFER_HEADER)?;
    lines
        .map(|(n, line)| {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let [time, node, id, kind, residency] = tokens[..] else {
                return Err(ReportError::new(n, "expected 5 fields"));
            };
            Ok(BufferEvent {
                time: parse_time(time, n)?,
                node: parse_node(node, n)?,
                id: id.to_string(),
                kind: kind
                    .parse()
                    .map_err(|_| ReportError::new(n, format!("bad event `{kind}`")))?,
                residency: parse_time(residency, n)?,
            })
        })
        .collect()
}
