use std::collections::HashMap;

use crate::mobility::Point;
use crate::sim::buffer::MessageId;
use crate::routing::ForwardKind;

/// Tracks which node pairs (dense indices, smaller first) are within radio range.
#[derive(Clone, Debug, Default)]
pub struct LinkTracker {
    up: Vec<(usize, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkChangeEvent {
    pub a: usize,
    pub b: usize,
    pub up: bool,
}

impl LinkTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pairs currently connected, sorted.
    pub fn up(&self) -> &[(usize, usize)] {
        &self.up
    }

    pub fn is_up(&self, a: usize, b: usize) -> bool {
        self.up.binary_search(&ordered(a, b)).is_ok()
    }

    /// Recomputes connectivity from `positions`; changes come out sorted by
    /// pair. A non-positive range connects nobody.
    pub fn update_links(&mut self, positions: &[Point], range: f64) -> Vec<LinkChangeEvent> {
        let now_up = pairs_in_range(positions, range);
        let mut changes = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.up.len() || j < now_up.len() {
            match (self.up.get(i), now_up.get(j)) {
                (Some(&old), Some(&new)) if old == new => {
                    i += 1;
                    j += 1;
                }
                (Some(&old), Some(&new)) if old < new => {
                    changes.push(LinkChangeEvent { a: old.0, b: old.1, up: false });
                    i += 1;
                }
                (Some(&old), None) => {
                    changes.push(LinkChangeEvent { a: old.0, b: old.1, up: false });
                    i += 1;
                }
                (_, Some(&new)) => {
                    changes.push(LinkChangeEvent { a: new.0, b: new.1, up: true });
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        self.up = now_up;
        changes
    }

    /// Applies an externally scripted change; returns false when it changes nothing.
    pub fn apply(&mut self, a: usize, b: usize, up: bool) -> bool {
        let pair = ordered(a, b);
        match (self.up.binary_search(&pair), up) {
            (Err(pos), true) => {
                self.up.insert(pos, pair);
                true
            }
            (Ok(pos), false) => {
                self.up.remove(pos);
                true
            }
            _ => false,
        }
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// All pairs at distance ≤ `range`, sorted, via a uniform grid with cell size `range`.
pub fn pairs_in_range(positions: &[Point], range: f64) -> Vec<(usize, usize)> {
    if !(range > 0.0) {
        return Vec::new();
    }
    let cell = |p: Point| ((p.x / range).floor() as i64, (p.y / range).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in positions.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i);
    }
    let mut pairs = Vec::new();
    for (i, &p) in positions.iter().enumerate() {
        let (cx, cy) = cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(members) = grid.get(&(cx + dx, cy + dy)) {
                    for &j in members {
                        if j > i && p.dist(positions[j]) <= range {
                            pairs.push((i, j));
                        }
                    }
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transfer {
    pub message: MessageId,
    pub from: usize,
    pub to: usize,
    pub kind: ForwardKind,
    pub size: u64,
    pub sent: u64,
    /// Milliseconds.
    pub started_at: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransferStep {
    InProgress,
    Completed,
    Aborted,
}

impl Transfer {
    /// Advances by one step of `dt_ms` at `bandwidth` bits/s. A transfer whose
    /// link went down is aborted and its partial bytes discarded.
    pub fn step(&mut self, link_up: bool, dt_ms: u64, bandwidth: u64) -> TransferStep {
        if !link_up {
            return TransferStep::Aborted;
        }
        let bytes = (u128::from(bandwidth) * u128::from(dt_ms) / 8000) as u64;
        self.sent = (self.sent + bytes).min(self.size);
        if self.sent >= self.size {
            TransferStep::Completed
        } else {
            TransferStep::InProgress
        }
    }
}
