//! Tick-driven DTN simulator.
//!
//! Each tick runs, in order: mobility, link up/down detection, TTL expiry,
//! transfer progress, traffic generation, and new transfers on idle links.
//! Time is kept in integer milliseconds.

pub mod buffer;
pub mod link;
pub mod traffic;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mobility::{advance, MobilityState, Point, SpeedClass, WaypointPolicy};
use crate::node::{NodeClass, NodeId};
use crate::reports::{
    write_buffer_events, write_connectivity, write_delivered, write_relays, BufferEvent, BufferEventKind,
    ContactEvent, DeliveryRecord, LinkChange, RelayRecord,
};
use crate::routing::{
    epidemic_on_contact, spray_on_contact, split_copies, CoinGate, Forward, ForwardKind, GateCounters, MlGate,
    NodeStats, PeerView, RouterKind,
};
use crate::scenario::{ConfigError, ScenarioSpec};

use buffer::{enforce_buffer, Admission, Buffer, Entry, Message, MessageId};
use link::{LinkChangeEvent, LinkTracker, Transfer, TransferStep};
use traffic::TrafficGenerator;

const MOBILITY_STREAM: u64 = 1;
const TRAFFIC_STREAM: u64 = 2;
const ROUTER_STREAM: u64 = 3;

/// A message injected at a fixed time instead of by the traffic generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedMessage {
    /// Seconds.
    pub time: f64,
    pub source: NodeId,
    pub destination: NodeId,
    pub size: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checks: u64,
    pub violations: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub generated: u64,
    pub aborted_transfers: u64,
    pub rejected: u64,
    pub evicted: u64,
    pub expired: u64,
    /// Largest buffer occupancy seen on any node, bytes.
    pub peak_buffer_bytes: u64,
    pub gate: GateCounters,
    pub audit: Option<AuditReport>,
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub scenario_id: String,
    pub router: RouterKind,
    pub seed: u64,
    /// Seconds simulated.
    pub duration: f64,
    pub nodes: Vec<NodeId>,
    pub contact_log: Vec<ContactEvent>,
    pub delivery_log: Vec<DeliveryRecord>,
    pub relay_log: Vec<RelayRecord>,
    pub buffer_log: Vec<BufferEvent>,
    /// Per-node statistics at the end of the run, in node order.
    pub node_stats: Vec<NodeStats>,
    pub stats: RunStats,
}

impl SimOutput {
    pub const CONNECTIVITY_FILE: &'static str = "ConnectivityONEReport.txt";
    pub const DELIVERED_FILE: &'static str = "DeliveredMessagesReport.txt";
    pub const RELAY_FILE: &'static str = "MessageRelayReport.txt";
    pub const BUFFER_FILE: &'static str = "BufferOccupancyReport.txt";

    pub fn write_reports(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(Self::CONNECTIVITY_FILE), write_connectivity(&self.contact_log))?;
        std::fs::write(dir.join(Self::DELIVERED_FILE), write_delivered(&self.delivery_log))?;
        std::fs::write(dir.join(Self::RELAY_FILE), write_relays(&self.relay_log))?;
        std::fs::write(dir.join(Self::BUFFER_FILE), write_buffer_events(&self.buffer_log))?;
        Ok(())
    }

    /// All four reports concatenated; equal for identical runs.
    pub fn fingerprint(&self) -> String {
        [
            write_connectivity(&self.contact_log),
            write_delivered(&self.delivery_log),
            write_relays(&self.relay_log),
            write_buffer_events(&self.buffer_log),
        ]
        .concat()
    }
}

/// Builder for a single run.
pub struct Simulation<'a> {
    spec: &'a ScenarioSpec,
    router: RouterKind,
    seed: u64,
    gate: Option<MlGate<'a>>,
    contacts: Option<Vec<ContactEvent>>,
    traffic: Option<Vec<ScriptedMessage>>,
    audit: bool,
}

impl<'a> Simulation<'a> {
    pub fn new(spec: &'a ScenarioSpec, router: RouterKind, seed: u64) -> Self {
        Simulation { spec, router, seed, gate: None, contacts: None, traffic: None, audit: false }
    }

    /// Relay gate for [`RouterKind::MlGated`].
    pub fn ml_gate(mut self, gate: MlGate<'a>) -> Self {
        self.gate = Some(gate);
        self
    }

    /// Replaces mobility with a fixed list of link changes.
    pub fn scripted_contacts(mut self, events: Vec<ContactEvent>) -> Self {
        self.contacts = Some(events);
        self
    }

    /// Replaces the traffic generator with a fixed list of messages.
    pub fn scripted_traffic(mut self, messages: Vec<ScriptedMessage>) -> Self {
        self.traffic = Some(messages);
        self
    }

    /// Checks spray copy conservation after every tick that changed a buffer.
    pub fn audit(mut self, on: bool) -> Self {
        self.audit = on;
        self
    }

    pub fn run(self) -> Result<SimOutput, ConfigError> {
        if self.router == RouterKind::MlGated && self.gate.is_none() {
            return Err(ConfigError::new("router", "the ML router needs a predictor"));
        }
        Engine::new(self)?.run()
    }
}

/// Runs a scenario with a router that needs no predictor.
pub fn run_simulation(spec: &ScenarioSpec, router: RouterKind, seed: u64) -> Result<SimOutput, ConfigError> {
    Simulation::new(spec, router, seed).run()
}

struct Host {
    id: NodeId,
    relays: bool,
    mobility: Option<MobilityState>,
    position: Point,
    buffer: Buffer,
    received: HashSet<MessageId>,
    busy: bool,
    sending: Option<MessageId>,
    version: u64,
    stats: NodeStats,
}

#[derive(Default)]
struct LinkState {
    transfer: Option<Transfer>,
    /// Memoized relay decision per direction: `[a→b, b→a]`.
    gate: [Option<bool>; 2],
    /// Buffer versions at which this link last had nothing to send.
    idle_at: Option<(u64, u64)>,
}

struct Engine<'a> {
    spec: &'a ScenarioSpec,
    router: RouterKind,
    seed: u64,
    map: crate::mobility::MapGraph,
    policy: WaypointPolicy,
    hosts: Vec<Host>,
    tracker: LinkTracker,
    links: BTreeMap<(usize, usize), LinkState>,
    script: Option<VecDeque<ContactEvent>>,
    scripted_traffic: Option<VecDeque<ScriptedMessage>>,
    generator: TrafficGenerator,
    next_scripted_id: u32,
    expiry: VecDeque<(u64, MessageId)>,
    mobility_rng: ChaCha8Rng,
    traffic_rng: ChaCha8Rng,
    coin: CoinGate,
    gate: Option<MlGate<'a>>,
    random_counters: GateCounters,
    now: u64,
    out: Output,
    audit: Option<Audit>,
}

#[derive(Default)]
struct Output {
    contacts: Vec<ContactEvent>,
    deliveries: Vec<DeliveryRecord>,
    relays: Vec<RelayRecord>,
    buffer: Vec<BufferEvent>,
    stats: RunStats,
}

struct Audit {
    limit: u32,
    /// Copies destroyed per message (handed over to the destination, evicted, expired).
    lost: HashMap<MessageId, u64>,
    dirty: bool,
    report: AuditReport,
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn secs(ms: u64) -> f64 {
    ms as f64 / 1000.0
}

fn ms(seconds: f64) -> u64 {
    (seconds * 1000.0).round() as u64
}

impl<'a> Engine<'a> {
    fn new(sim: Simulation<'a>) -> Result<Self, ConfigError> {
        let spec = sim.spec;
        let (map, placement) = spec.validate()?;
        let mut mobility_rng = rng_stream(sim.seed, MOBILITY_STREAM);
        let ids = spec.node_ids();
        let mut hosts = Vec::with_capacity(ids.len());
        let mut hospital = placement.hospitals.iter();
        for &id in &ids {
            let (mobility, vertex) = match id.class {
                NodeClass::Pedestrian | NodeClass::Car => {
                    use rand::Rng;
                    let start = mobility_rng.gen_range(0..map.vertex_count());
                    let (class, pause) = if id.class == NodeClass::Pedestrian {
                        (SpeedClass::Pedestrian, spec.mobility.pedestrian_pause)
                    } else {
                        (SpeedClass::Car, spec.mobility.car_pause)
                    };
                    (Some(MobilityState::parked(class, start, (pause[0], pause[1]))), start)
                }
                NodeClass::Accident => (None, placement.accident),
                NodeClass::Hospital => (None, *hospital.next().expect("placement has every hospital")),
            };
            hosts.push(Host {
                id,
                relays: id.class.is_mobile(),
                mobility,
                position: map.point(vertex),
                buffer: Buffer::new(spec.buffer.capacity),
                received: HashSet::new(),
                busy: false,
                sending: None,
                version: 0,
                stats: NodeStats::default(),
            });
        }

        let lookup = |n: NodeId, field: &str| -> Result<usize, ConfigError> {
            let i = n.index as usize;
            if ids.get(i) == Some(&n) {
                Ok(i)
            } else {
                Err(ConfigError::new(field, format!("{n} is not a host in {}", spec.scenario_id())))
            }
        };
        let script = match sim.contacts {
            Some(mut events) => {
                for e in &events {
                    lookup(e.a, "contacts")?;
                    lookup(e.b, "contacts")?;
                    if e.a == e.b {
                        return Err(ConfigError::new("contacts", format!("{} linked to itself", e.a)));
                    }
                }
                events.sort_by(|x, y| x.time.total_cmp(&y.time));
                Some(events.into_iter().collect())
            }
            None => None,
        };
        let scripted_traffic = match sim.traffic {
            Some(mut msgs) => {
                for m in &msgs {
                    lookup(m.source, "traffic")?;
                    lookup(m.destination, "traffic")?;
                }
                msgs.sort_by(|x, y| x.time.total_cmp(&y.time));
                Some(msgs.into_iter().collect())
            }
            None => None,
        };

        let [lo, hi] = spec.traffic.interval;
        let generator = TrafficGenerator::new(
            spec.accident_id(),
            spec.destination_ids(),
            (ms(lo), ms(hi)),
            (spec.traffic.size[0], spec.traffic.size[1]),
            spec.ttl_ms(),
            spec.spray.initial_copies,
        );
        let policy = WaypointPolicy {
            regime: spec.regime,
            hotspots: placement.hotspots.clone(),
            hotspot_probability: spec.map.hotspot_probability,
        };
        let audit = sim.audit.then(|| Audit {
            limit: spec.spray.initial_copies,
            lost: HashMap::new(),
            dirty: false,
            report: AuditReport::default(),
        });
        Ok(Engine {
            spec,
            router: sim.router,
            seed: sim.seed,
            map,
            policy,
            hosts,
            tracker: LinkTracker::new(),
            links: BTreeMap::new(),
            script,
            scripted_traffic,
            generator,
            next_scripted_id: 1,
            expiry: VecDeque::new(),
            mobility_rng,
            traffic_rng: rng_stream(sim.seed, TRAFFIC_STREAM),
            coin: CoinGate { rng: rng_stream(sim.seed, ROUTER_STREAM) },
            gate: sim.gate,
            random_counters: GateCounters::default(),
            now: 0,
            out: Output::default(),
            audit,
        })
    }

    fn run(mut self) -> Result<SimOutput, ConfigError> {
        let tick = self.spec.tick_ms();
        let steps = self.spec.duration_ms() / tick;
        for step in 0..=steps {
            self.now = step * tick;
            if step > 0 {
                self.move_nodes(tick)?;
            }
            self.update_links();
            self.expire();
            if step > 0 {
                self.progress_transfers(tick);
            }
            self.generate();
            self.start_transfers();
            self.check_audit();
        }
        let mut stats = std::mem::take(&mut self.out.stats);
        stats.gate = match self.router {
            RouterKind::MlGated => self.gate.as_ref().map(|g| g.counters()).unwrap_or_default(),
            RouterKind::Random => self.random_counters,
            _ => GateCounters::default(),
        };
        stats.audit = self.audit.map(|a| a.report);
        Ok(SimOutput {
            scenario_id: self.spec.scenario_id(),
            router: self.router,
            seed: self.seed,
            duration: secs(steps * tick),
            nodes: self.hosts.iter().map(|h| h.id).collect(),
            contact_log: self.out.contacts,
            delivery_log: self.out.deliveries,
            relay_log: self.out.relays,
            buffer_log: self.out.buffer,
            node_stats: self.hosts.into_iter().map(|h| h.stats).collect(),
            stats,
        })
    }

    fn move_nodes(&mut self, tick: u64) -> Result<(), ConfigError> {
        if self.script.is_some() {
            return Ok(());
        }
        let dt = secs(tick);
        for host in &mut self.hosts {
            if let Some(state) = host.mobility.as_mut() {
                host.position = advance(state, dt, &self.map, &self.policy, &mut self.mobility_rng)
                    .map_err(|e| ConfigError::new("map", e.to_string()))?;
            }
        }
        Ok(())
    }

    fn update_links(&mut self) {
        let changes: Vec<LinkChangeEvent> = match self.script.as_mut() {
            Some(script) => {
                let mut changes = Vec::new();
                while script.front().is_some_and(|e| ms(e.time) <= self.now) {
                    let e = script.pop_front().expect("checked");
                    let (a, b) = (e.a.index as usize, e.b.index as usize);
                    let up = e.kind == LinkChange::Up;
                    if self.tracker.apply(a, b, up) {
                        changes.push(LinkChangeEvent { a: a.min(b), b: a.max(b), up });
                    }
                }
                changes
            }
            None => {
                let positions: Vec<Point> = self.hosts.iter().map(|h| h.position).collect();
                self.tracker.update_links(&positions, self.spec.radio.range)
            }
        };
        let t = secs(self.now);
        for c in changes {
            let (ia, ib) = (self.hosts[c.a].id, self.hosts[c.b].id);
            if c.up {
                self.hosts[c.a].stats.contacts.link_up(ib, t);
                self.hosts[c.b].stats.contacts.link_up(ia, t);
                self.links.insert((c.a, c.b), LinkState::default());
                self.out.contacts.push(ContactEvent::new(t, ia, ib, LinkChange::Up));
            } else {
                self.hosts[c.a].stats.contacts.link_down(ib, t);
                self.hosts[c.b].stats.contacts.link_down(ia, t);
                if let Some(link) = self.links.remove(&(c.a, c.b)) {
                    if let Some(tr) = link.transfer {
                        self.abort(&tr);
                    }
                }
                self.out.contacts.push(ContactEvent::new(t, ia, ib, LinkChange::Down));
            }
        }
    }

    fn abort(&mut self, tr: &Transfer) {
        self.hosts[tr.from].busy = false;
        self.hosts[tr.from].sending = None;
        self.hosts[tr.to].busy = false;
        self.out.stats.aborted_transfers += 1;
    }

    fn expire(&mut self) {
        while self.expiry.front().is_some_and(|&(at, _)| self.now > at) {
            let (_, id) = self.expiry.pop_front().expect("checked");
            let doomed: Vec<(usize, usize)> = self
                .links
                .iter()
                .filter(|(_, l)| l.transfer.as_ref().is_some_and(|t| t.message == id))
                .map(|(k, _)| *k)
                .collect();
            for key in doomed {
                let tr = self.links.get_mut(&key).and_then(|l| l.transfer.take()).expect("filtered");
                self.abort(&tr);
            }
            for i in 0..self.hosts.len() {
                if let Some(entry) = self.hosts[i].buffer.remove(id) {
                    self.hosts[i].version += 1;
                    self.out.stats.expired += 1;
                    self.drop_replica(i, entry, BufferEventKind::Expired);
                }
            }
        }
    }

    /// Logs the end of a replica's stay in `host`'s buffer.
    fn drop_replica(&mut self, host: usize, entry: Entry, kind: BufferEventKind) {
        self.out.buffer.push(BufferEvent {
            time: secs(self.now),
            node: self.hosts[host].id,
            id: entry.message.id.to_string(),
            kind,
            residency: secs(self.now - entry.arrived_at),
        });
        if let Some(audit) = self.audit.as_mut() {
            if self.router != RouterKind::Epidemic {
                *audit.lost.entry(entry.message.id).or_default() += u64::from(entry.message.copies);
            }
            audit.dirty = true;
        }
    }

    fn progress_transfers(&mut self, tick: u64) {
        let bandwidth = self.spec.radio.bandwidth;
        let mut done = Vec::new();
        for (key, link) in self.links.iter_mut() {
            if let Some(tr) = link.transfer.as_mut() {
                if tr.step(true, tick, bandwidth) == TransferStep::Completed {
                    done.push(*key);
                }
            }
        }
        for key in done {
            let link = self.links.get_mut(&key).expect("link still up");
            let tr = link.transfer.take().expect("completed transfer");
            link.idle_at = None;
            self.complete(tr);
        }
    }

    fn complete(&mut self, tr: Transfer) {
        let (from, to) = (tr.from, tr.to);
        self.hosts[from].busy = false;
        self.hosts[from].sending = None;
        self.hosts[to].busy = false;
        let msg = self.hosts[from].buffer.get(tr.message).cloned().expect("sender keeps replicas in flight");
        let t = secs(self.now);
        let receiver = self.hosts[to].id;
        match tr.kind {
            ForwardKind::Deliver => {
                let mut path = msg.path.clone();
                path.push(receiver);
                let hopcount = (path.len() - 1) as u32;
                let delay_ms = self.now - msg.created_at;
                let record = DeliveryRecord {
                    time: t,
                    id: msg.id.to_string(),
                    size: msg.size,
                    hopcount,
                    delivery_time: secs(delay_ms),
                    from_host: msg.source,
                    to_host: receiver,
                    remaining_ttl: (msg.ttl.saturating_sub(delay_ms) / 60_000) as u32,
                    is_response: false,
                    path: path.clone(),
                };
                for relay in &path[1..path.len() - 1] {
                    self.hosts[relay.index as usize].stats.relays.record_relay(hopcount, record.delivery_time);
                }
                self.hosts[to].stats.relays.destination += 1;
                self.hosts[to].received.insert(msg.id);
                self.out.deliveries.push(record);
                let entry = self.hosts[from].buffer.remove(msg.id).expect("present");
                self.drop_replica(from, entry, BufferEventKind::Handoff);
            }
            ForwardKind::Spray | ForwardKind::Flood => {
                let (keep, give) = match tr.kind {
                    ForwardKind::Spray => split_copies(msg.copies, self.spec.spray.binary),
                    _ => (msg.copies, 1),
                };
                let mut copy = msg.clone();
                copy.copies = give;
                copy.path.push(receiver);
                match enforce_buffer(&mut self.hosts[to].buffer, copy, self.now, None) {
                    Admission::Rejected(m) => {
                        self.out.stats.rejected += 1;
                        self.out.buffer.push(BufferEvent {
                            time: t,
                            node: receiver,
                            id: m.id.to_string(),
                            kind: BufferEventKind::Rejected,
                            residency: 0.0,
                        });
                        self.hosts[from].version += 1;
                        self.hosts[to].version += 1;
                        return;
                    }
                    Admission::Admitted => {}
                    Admission::AdmittedWithEvictions(evicted) => {
                        for e in evicted {
                            self.out.stats.evicted += 1;
                            self.drop_replica(to, e, BufferEventKind::Evicted);
                        }
                    }
                }
                self.note_occupancy(to);
                self.hosts[from].buffer.get_mut(msg.id).expect("present").copies = keep;
                if let Some(a) = self.audit.as_mut() {
                    a.dirty = true;
                }
            }
        }
        self.hosts[from].version += 1;
        self.hosts[to].version += 1;
        self.out.relays.push(RelayRecord { time: t, id: msg.id.to_string(), from: self.hosts[from].id, to: receiver });
    }

    fn note_occupancy(&mut self, host: usize) {
        let used = self.hosts[host].buffer.used();
        self.out.stats.peak_buffer_bytes = self.out.stats.peak_buffer_bytes.max(used);
    }

    fn generate(&mut self) {
        let mut fresh = Vec::new();
        match self.scripted_traffic.as_mut() {
            Some(queue) => {
                while queue.front().is_some_and(|m| ms(m.time) <= self.now) {
                    let m = queue.pop_front().expect("checked");
                    let id = MessageId(self.next_scripted_id);
                    self.next_scripted_id += 1;
                    fresh.push(Message {
                        id,
                        size: m.size,
                        source: m.source,
                        destination: m.destination,
                        created_at: self.now,
                        ttl: self.spec.ttl_ms(),
                        copies: self.spec.spray.initial_copies,
                        path: vec![m.source],
                    });
                }
            }
            None => {
                if let Some(m) = self.generator.generate_traffic(self.now, &mut self.traffic_rng) {
                    fresh.push(m);
                }
            }
        }
        for msg in fresh {
            self.out.stats.generated += 1;
            let src = msg.source.index as usize;
            let protected = self.hosts[src].sending;
            let (id, expires) = (msg.id, msg.created_at + msg.ttl);
            match enforce_buffer(&mut self.hosts[src].buffer, msg, self.now, protected) {
                Admission::Rejected(m) => {
                    self.out.stats.rejected += 1;
                    self.out.buffer.push(BufferEvent {
                        time: secs(self.now),
                        node: self.hosts[src].id,
                        id: m.id.to_string(),
                        kind: BufferEventKind::Rejected,
                        residency: 0.0,
                    });
                    continue;
                }
                Admission::Admitted => {}
                Admission::AdmittedWithEvictions(evicted) => {
                    for e in evicted {
                        self.out.stats.evicted += 1;
                        self.drop_replica(src, e, BufferEventKind::Evicted);
                    }
                }
            }
            self.hosts[src].version += 1;
            self.note_occupancy(src);
            self.expiry.push_back((expires, id));
            self.out.buffer.push(BufferEvent {
                time: secs(self.now),
                node: self.hosts[src].id,
                id: id.to_string(),
                kind: BufferEventKind::Created,
                residency: 0.0,
            });
            if let Some(a) = self.audit.as_mut() {
                a.dirty = true;
            }
        }
    }

    fn start_transfers(&mut self) {
        let keys: Vec<(usize, usize)> = self.links.keys().copied().collect();
        for (a, b) in keys {
            if self.hosts[a].busy || self.hosts[b].busy {
                continue;
            }
            let versions = (self.hosts[a].version, self.hosts[b].version);
            let link = self.links.get_mut(&(a, b)).expect("listed");
            if link.transfer.is_some() || link.idle_at == Some(versions) {
                continue;
            }
            let mut memo = link.gate;
            let ab = self.plan(a, b, &mut memo[0]);
            let ba = self.plan(b, a, &mut memo[1]);
            let choice = ab
                .iter()
                .find(|f| f.kind == ForwardKind::Deliver)
                .map(|f| (a, b, *f))
                .or_else(|| ba.iter().find(|f| f.kind == ForwardKind::Deliver).map(|f| (b, a, *f)))
                .or_else(|| ab.first().map(|f| (a, b, *f)))
                .or_else(|| ba.first().map(|f| (b, a, *f)));
            let link = self.links.get_mut(&(a, b)).expect("listed");
            link.gate = memo;
            match choice {
                Some((from, to, fwd)) => {
                    let size = self.hosts[from].buffer.get(fwd.message).expect("planned from buffer").size;
                    link.transfer = Some(Transfer {
                        message: fwd.message,
                        from,
                        to,
                        kind: fwd.kind,
                        size,
                        sent: 0,
                        started_at: self.now,
                    });
                    self.hosts[from].busy = true;
                    self.hosts[from].sending = Some(fwd.message);
                    self.hosts[to].busy = true;
                }
                None => link.idle_at = Some(versions),
            }
        }
    }

    fn plan(&mut self, from: usize, to: usize, memo: &mut Option<bool>) -> Vec<Forward> {
        let sender = &self.hosts[from];
        let receiver = &self.hosts[to];
        let peer = PeerView { id: receiver.id, relays: receiver.relays, buffer: &receiver.buffer, received: &receiver.received };
        match self.router {
            RouterKind::Epidemic => epidemic_on_contact(&sender.buffer, &peer),
            RouterKind::SprayAndWait => spray_on_contact(&sender.buffer, &peer, &mut || true),
            RouterKind::Random => {
                let coin = &mut self.coin;
                let counters = &mut self.random_counters;
                spray_on_contact(&sender.buffer, &peer, &mut || {
                    *memo.get_or_insert_with(|| {
                        let allow = coin.flip();
                        counters.decisions += 1;
                        counters.relayed += u64::from(allow);
                        allow
                    })
                })
            }
            RouterKind::MlGated => {
                let gate = self.gate.as_mut().expect("checked at build");
                let now = secs(self.now);
                let stats = &receiver.stats;
                spray_on_contact(&sender.buffer, &peer, &mut || {
                    *memo.get_or_insert_with(|| gate.decide(peer.id, stats, now))
                })
            }
        }
    }

    fn check_audit(&mut self) {
        let Some(audit) = self.audit.as_mut() else { return };
        if !audit.dirty {
            return;
        }
        audit.dirty = false;
        audit.report.checks += 1;
        if self.router == RouterKind::Epidemic {
            return;
        }
        let mut live: HashMap<MessageId, u64> = HashMap::new();
        for host in &self.hosts {
            for e in host.buffer.entries() {
                if e.message.copies == 0 {
                    audit.report.violations.push(format!("{}: {} holds zero copies", secs(self.now), e.message.id));
                }
                *live.entry(e.message.id).or_default() += u64::from(e.message.copies);
            }
        }
        for (id, copies) in live {
            let lost = audit.lost.get(&id).copied().unwrap_or(0);
            if copies > u64::from(audit.limit) || copies + lost != u64::from(audit.limit) {
                if audit.report.violations.len() < 100 {
                    audit.report.violations.push(format!(
                        "{}: {id} has {copies} live and {lost} lost copies (limit {})",
                        secs(self.now),
                        audit.limit
                    ));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Destinations, MapSource};

    fn tiny_spec() -> ScenarioSpec {
        let mut spec = ScenarioSpec::default().with_nodes(2, 1).with_duration(60.0);
        spec.map.source = MapSource::Grid { rows: 3, cols: 3, spacing: 50.0 };
        spec.traffic.destinations = Destinations::Explicit(vec![NodeId::hospital(4)]);
        spec
    }

    fn up(t: f64, a: NodeId, b: NodeId) -> ContactEvent {
        ContactEvent::new(t, a, b, LinkChange::Up)
    }

    fn down(t: f64, a: NodeId, b: NodeId) -> ContactEvent {
        ContactEvent::new(t, a, b, LinkChange::Down)
    }

    fn one_message(size: u64) -> Vec<ScriptedMessage> {
        vec![ScriptedMessage { time: 1.0, source: NodeId::accident(3), destination: NodeId::hospital(4), size }]
    }

    #[test]
    fn transfer_completes_after_four_seconds() {
        let spec = tiny_spec();
        let (acc, p0) = (NodeId::accident(3), NodeId::pedestrian(0));
        let out = Simulation::new(&spec, RouterKind::SprayAndWait, 1)
            .scripted_contacts(vec![up(2.0, p0, acc)])
            .scripted_traffic(one_message(1_000_000))
            .run()
            .unwrap();
        assert_eq!(out.relay_log.len(), 1);
        assert_eq!(out.relay_log[0].time, 6.0);
        assert_eq!(out.relay_log[0].from, acc);
    }

    #[test]
    fn link_drop_aborts_transfer() {
        let spec = tiny_spec();
        let (acc, p0) = (NodeId::accident(3), NodeId::pedestrian(0));
        let out = Simulation::new(&spec, RouterKind::SprayAndWait, 1)
            .scripted_contacts(vec![up(2.0, p0, acc), down(5.9, p0, acc)])
            .scripted_traffic(one_message(1_000_000))
            .run()
            .unwrap();
        assert!(out.relay_log.is_empty());
        assert_eq!(out.stats.aborted_transfers, 1);
    }

    #[test]
    fn spray_then_deliver_records_path() {
        let spec = tiny_spec();
        let (acc, p0, h) = (NodeId::accident(3), NodeId::pedestrian(0), NodeId::hospital(4));
        let out = Simulation::new(&spec, RouterKind::SprayAndWait, 1)
            .scripted_contacts(vec![up(2.0, p0, acc), down(10.0, p0, acc), up(20.0, p0, h)])
            .scripted_traffic(one_message(500_000))
            .audit(true)
            .run()
            .unwrap();
        assert_eq!(out.delivery_log.len(), 1);
        let d = &out.delivery_log[0];
        assert_eq!(d.path, vec![acc, p0, h]);
        assert_eq!(d.hopcount, 2);
        assert_eq!(d.time, 22.0);
        assert_eq!(d.delivery_time, 21.0);
        assert_eq!(d.remaining_ttl, 299);
        assert_eq!(out.node_stats[0].relays.relayed, 1);
        assert_eq!(out.node_stats[4].relays.destination, 1);
        assert!(out.stats.audit.unwrap().violations.is_empty());
    }

    #[test]
    fn ml_router_requires_gate() {
        let spec = tiny_spec();
        assert_eq!(run_simulation(&spec, RouterKind::MlGated, 1).unwrap_err().field, "router");
    }

    #[test]
    fn unknown_scripted_node_is_rejected() {
        let spec = tiny_spec();
        let err = Simulation::new(&spec, RouterKind::SprayAndWait, 1)
            .scripted_contacts(vec![up(1.0, NodeId::car(40), NodeId::pedestrian(0))])
            .run()
            .unwrap_err();
        assert_eq!(err.field, "contacts");
    }
}
