//! Declarative scenario description, loadable from TOML.
//!
//! ```toml
//! duration = 7200.0
//! regime = "weekday"
//!
//! [nodes]
//! pedestrians = 20
//! cars = 20
//!
//! [map]
//! kind = "grid"
//! rows = 8
//! cols = 8
//! spacing = 120.0
//! ```
//!
//! Every other field has a default matching the emergency scenario: 30 m radios at
//! 2 Mbps, 50 MB buffers, 500 KB–1 MB messages every 25–35 s with a 300 minute TTL.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mobility::{generate_map, MapGraph, MapKind, MobilityError, Point, Regime};
use crate::node::{NodeClass, NodeId};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { field: field.into(), message: message.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    /// Simulated seconds.
    pub duration: f64,
    /// Mobility and link sampling step, seconds.
    pub tick: f64,
    pub regime: Regime,
    pub nodes: NodeCounts,
    pub radio: RadioConfig,
    pub buffer: BufferConfig,
    pub traffic: TrafficConfig,
    pub map: MapConfig,
    pub mobility: MovementConfig,
    pub spray: SprayConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeCounts {
    pub pedestrians: u32,
    pub cars: u32,
    pub hospitals: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    /// Meters.
    pub range: f64,
    /// Bits per second.
    pub bandwidth: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BufferConfig {
    /// Bytes.
    pub capacity: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Destinations {
    /// `"hospitals"`: every hospital node.
    Named(DestinationGroup),
    Explicit(Vec<NodeId>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DestinationGroup {
    Hospitals,
    /// Any pedestrian or car.
    Mobile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// Seconds between messages, drawn uniformly.
    pub interval: [f64; 2],
    /// Bytes, drawn uniformly.
    pub size: [u64; 2],
    /// Seconds.
    pub ttl: f64,
    pub destinations: Destinations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSource {
    Grid {
        rows: u32,
        cols: u32,
        spacing: f64,
    },
    RandomPlanar {
        vertices: u32,
        width: f64,
        height: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Edge-list file (`V <id> <x> <y>` / `E <a> <b>`).
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    #[serde(flatten)]
    pub source: MapSource,
    /// Vertex ids favoured by weekday trips; defaults to five spread-out vertices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hotspots: Option<Vec<u32>>,
    #[serde(default = "default_hotspot_probability")]
    pub hotspot_probability: f64,
    /// Vertex id of the accident node; defaults to the most central vertex.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accident: Option<u32>,
    /// Vertex ids of the hospital nodes; defaults to two vertices near opposite corners.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hospitals: Option<Vec<u32>>,
}

fn default_hotspot_probability() -> f64 {
    0.8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MovementConfig {
    /// Seconds, drawn uniformly at each pedestrian arrival.
    pub pedestrian_pause: [f64; 2],
    pub car_pause: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SprayConfig {
    pub initial_copies: u32,
    pub binary: bool,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            duration: 7200.0,
            tick: 0.1,
            regime: Regime::Weekday,
            nodes: NodeCounts::default(),
            radio: RadioConfig::default(),
            buffer: BufferConfig::default(),
            traffic: TrafficConfig::default(),
            map: MapConfig::default(),
            mobility: MovementConfig::default(),
            spray: SprayConfig::default(),
        }
    }
}

impl Default for NodeCounts {
    fn default() -> Self {
        NodeCounts { pedestrians: 20, cars: 20, hospitals: 2 }
    }
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig { range: 30.0, bandwidth: 2_000_000 }
    }
}

impl Default for BufferConfig {
    fn default() -> Self {
        BufferConfig { capacity: 50_000_000 }
    }
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            interval: [25.0, 35.0],
            size: [500_000, 1_000_000],
            ttl: 18_000.0,
            destinations: Destinations::Named(DestinationGroup::Hospitals),
        }
    }
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            source: MapSource::Grid { rows: 8, cols: 8, spacing: 120.0 },
            hotspots: None,
            hotspot_probability: default_hotspot_probability(),
            accident: None,
            hospitals: None,
        }
    }
}

impl Default for MovementConfig {
    fn default() -> Self {
        MovementConfig { pedestrian_pause: [0.0, 120.0], car_pause: [0.0, 0.0] }
    }
}

impl Default for SprayConfig {
    fn default() -> Self {
        SprayConfig { initial_copies: 10, binary: true }
    }
}

/// Where the stationary nodes and the weekday hotspots sit, as dense vertex indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub accident: usize,
    pub hospitals: Vec<usize>,
    pub hotspots: Vec<usize>,
}

impl ScenarioSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::new("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// `P<pedestrians>_C<cars>`, the scenario naming used in reports and datasets.
    pub fn scenario_id(&self) -> String {
        format!("P{}_C{}", self.nodes.pedestrians, self.nodes.cars)
    }

    pub fn with_nodes(mut self, pedestrians: u32, cars: u32) -> Self {
        self.nodes.pedestrians = pedestrians;
        self.nodes.cars = cars;
        self
    }

    pub fn with_regime(mut self, regime: Regime) -> Self {
        self.regime = regime;
        self
    }

    pub fn with_duration(mut self, seconds: f64) -> Self {
        self.duration = seconds;
        self
    }

    pub fn node_count(&self) -> usize {
        (self.nodes.pedestrians + self.nodes.cars + 1 + self.nodes.hospitals) as usize
    }

    /// Hosts in index order: pedestrians, cars, the accident node, hospitals.
    pub fn node_ids(&self) -> Vec<NodeId> {
        let p = self.nodes.pedestrians;
        let c = self.nodes.cars;
        let mut ids: Vec<NodeId> = (0..p).map(NodeId::pedestrian).collect();
        ids.extend((p..p + c).map(NodeId::car));
        ids.push(NodeId::accident(p + c));
        ids.extend((p + c + 1..p + c + 1 + self.nodes.hospitals).map(NodeId::hospital));
        ids
    }

    pub fn accident_id(&self) -> NodeId {
        NodeId::accident(self.nodes.pedestrians + self.nodes.cars)
    }

    pub fn hospital_ids(&self) -> Vec<NodeId> {
        self.node_ids().into_iter().filter(|n| n.class == NodeClass::Hospital).collect()
    }

    pub fn destination_ids(&self) -> Vec<NodeId> {
        match &self.traffic.destinations {
            Destinations::Named(DestinationGroup::Hospitals) => self.hospital_ids(),
            Destinations::Named(DestinationGroup::Mobile) => {
                self.node_ids().into_iter().filter(|n| n.class.is_mobile()).collect()
            }
            Destinations::Explicit(list) => list.clone(),
        }
    }

    pub fn duration_ms(&self) -> u64 {
        (self.duration * 1000.0).round() as u64
    }

    pub fn tick_ms(&self) -> u64 {
        (self.tick * 1000.0).round() as u64
    }

    pub fn ttl_ms(&self) -> u64 {
        (self.traffic.ttl * 1000.0).round() as u64
    }

    pub fn build_map(&self) -> Result<MapGraph, ConfigError> {
        let map_err = |e: MobilityError| ConfigError::new("map", e.to_string());
        match &self.map.source {
            MapSource::Grid { rows, cols, spacing } => generate_map(
                &MapKind::Grid { rows: *rows, cols: *cols, spacing: *spacing },
                0,
            )
            .map_err(map_err),
            MapSource::RandomPlanar { vertices, width, height, seed } => generate_map(
                &MapKind::RandomPlanar { vertices: *vertices, width: *width, height: *height },
                *seed,
            )
            .map_err(map_err),
            MapSource::File { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ConfigError::new("map.path", format!("{}: {e}", path.display())))?;
                MapGraph::parse_edge_list(&text).map_err(map_err)
            }
        }
    }

    /// Resolves configured vertex ids, filling the defaults from the map's bounding box.
    pub fn placement(&self, map: &MapGraph) -> Result<Placement, ConfigError> {
        let resolve = |field: &str, id: u32| {
            map.index_of(id)
                .ok_or_else(|| ConfigError::new(field, format!("vertex {id} is not on the map")))
        };
        let accident = match self.map.accident {
            Some(id) => resolve("map.accident", id)?,
            None => nearest_vertex(map, 0.5, 0.5),
        };
        let hospitals: Vec<usize> = match &self.map.hospitals {
            Some(ids) => ids.iter().map(|&id| resolve("map.hospitals", id)).collect::<Result<_, _>>()?,
            None => {
                let anchors = [(0.15, 0.85), (0.85, 0.15), (0.15, 0.15), (0.85, 0.85)];
                (0..self.nodes.hospitals as usize)
                    .map(|i| {
                        let (fx, fy) = anchors[i % anchors.len()];
                        nearest_vertex(map, fx, fy)
                    })
                    .collect()
            }
        };
        if hospitals.len() != self.nodes.hospitals as usize {
            return Err(ConfigError::new(
                "map.hospitals",
                format!("{} vertices listed for {} hospitals", hospitals.len(), self.nodes.hospitals),
            ));
        }
        let hotspots: Vec<usize> = match &self.map.hotspots {
            Some(ids) => ids.iter().map(|&id| resolve("map.hotspots", id)).collect::<Result<_, _>>()?,
            None => {
                let mut spots: Vec<usize> = [(0.5, 0.5), (0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)]
                    .iter()
                    .map(|&(fx, fy)| nearest_vertex(map, fx, fy))
                    .collect();
                spots.dedup();
                spots
            }
        };
        Ok(Placement { accident, hospitals, hotspots })
    }

    /// Checks everything that does not need the map, then builds and places it.
    pub fn validate(&self) -> Result<(MapGraph, Placement), ConfigError> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::new(field, format!("must be positive, got {v}")))
            }
        };
        positive("duration", self.duration)?;
        positive("tick", self.tick)?;
        if self.tick_ms() == 0 {
            return Err(ConfigError::new("tick", "must be at least one millisecond"));
        }
        if self.nodes.pedestrians + self.nodes.cars == 0 {
            return Err(ConfigError::new("nodes", "need at least one pedestrian or car"));
        }
        if !(self.radio.range.is_finite() && self.radio.range >= 0.0) {
            return Err(ConfigError::new("radio.range", "must be a non-negative distance"));
        }
        if self.radio.bandwidth == 0 {
            return Err(ConfigError::new("radio.bandwidth", "must be positive"));
        }
        let [lo, hi] = self.traffic.interval;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(ConfigError::new("traffic.interval", "need 0 < min <= max"));
        }
        let [smin, smax] = self.traffic.size;
        if smin == 0 || smin > smax {
            return Err(ConfigError::new("traffic.size", "need 0 < min <= max"));
        }
        if smax > self.buffer.capacity {
            return Err(ConfigError::new("traffic.size", "largest message exceeds buffer capacity"));
        }
        positive("traffic.ttl", self.traffic.ttl)?;
        let node_ids = self.node_ids();
        let destinations = self.destination_ids();
        if destinations.is_empty() {
            return Err(ConfigError::new("traffic.destinations", "destination set is empty"));
        }
        if let Some(d) = destinations.iter().find(|d| !node_ids.contains(d)) {
            return Err(ConfigError::new("traffic.destinations", format!("{d} is not a host")));
        }
        if !(0.0..=1.0).contains(&self.map.hotspot_probability) {
            return Err(ConfigError::new("map.hotspot_probability", "must lie in [0, 1]"));
        }
        for (field, [a, b]) in [
            ("mobility.pedestrian_pause", self.mobility.pedestrian_pause),
            ("mobility.car_pause", self.mobility.car_pause),
        ] {
            if !(a >= 0.0 && a <= b && b.is_finite()) {
                return Err(ConfigError::new(field, "need 0 <= min <= max"));
            }
        }
        if self.spray.initial_copies == 0 {
            return Err(ConfigError::new("spray.initial_copies", "must be at least 1"));
        }
        let map = self.build_map()?;
        let placement = self.placement(&map)?;
        if self.regime == Regime::Weekday && placement.hotspots.is_empty() {
            return Err(ConfigError::new("map.hotspots", "weekday regime needs hotspots"));
        }
        Ok((map, placement))
    }
}

fn nearest_vertex(map: &MapGraph, fx: f64, fy: f64) -> usize {
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for v in 0..map.vertex_count() {
        let p = map.point(v);
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let target = Point::new(min_x + fx * (max_x - min_x), min_y + fy * (max_y - min_y));
    (0..map.vertex_count())
        .min_by(|&a, &b| map.point(a).dist(target).total_cmp(&map.point(b).dist(target)))
        .expect("map has vertices")
}
