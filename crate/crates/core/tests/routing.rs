use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dtnlab_core::mobility::Regime;
use dtnlab_core::reports::{ContactEvent, LinkChange};
use dtnlab_core::routing::predictor::{ConstantPredictor, FnPredictor, UnavailablePredictor};
use dtnlab_core::routing::{CoinGate, DecisionCache, FeatureDefaults, MlGate, Predictor};
use dtnlab_core::scenario::{Destinations, MapSource};
use dtnlab_core::sim::ScriptedMessage;
use dtnlab_core::{NodeId, RouterKind, ScenarioSpec, SimOutput, Simulation};

const DEFAULTS: FeatureDefaults = FeatureDefaults { avg_hop_count: 2.0, avg_delivery_time: 1500.0, as_relay_count: 3.0 };

fn short_spec(p: u32, c: u32, regime: Regime, duration: f64) -> ScenarioSpec {
    ScenarioSpec::default().with_nodes(p, c).with_regime(regime).with_duration(duration)
}

fn gated(spec: &ScenarioSpec, seed: u64, predictor: &mut dyn Predictor, cache: DecisionCache) -> SimOutput {
    Simulation::new(spec, RouterKind::MlGated, seed)
        .ml_gate(MlGate::new(predictor, DEFAULTS, Some(7200.0)).with_cache(cache))
        .run()
        .unwrap()
}

#[test]
fn open_gate_reproduces_spray_and_wait() {
    let spec = short_spec(12, 12, Regime::Weekday, 3600.0);
    let spray = Simulation::new(&spec, RouterKind::SprayAndWait, 4).run().unwrap();
    let mut always = ConstantPredictor(1);
    let ml = gated(&spec, 4, &mut always, DecisionCache::default());
    assert_eq!(ml.fingerprint(), spray.fingerprint());
    assert!(ml.stats.gate.decisions > 0);
    assert_eq!(ml.stats.gate.decisions, ml.stats.gate.relayed);
}

#[test]
fn closed_gate_leaves_only_direct_delivery() {
    let spec = short_spec(12, 12, Regime::Weekday, 3600.0);
    let mut never = ConstantPredictor(0);
    let ml = gated(&spec, 4, &mut never, DecisionCache::default());
    let hospitals = spec.hospital_ids();
    assert!(ml.relay_log.iter().all(|r| r.from == spec.accident_id() && hospitals.contains(&r.to)));
    assert!(ml.delivery_log.iter().all(|d| d.hopcount == 1));
    assert_eq!(ml.stats.gate.relayed, 0);
}

#[test]
fn dead_predictor_falls_back_on_every_eligible_encounter() {
    let spec = short_spec(12, 12, Regime::Holiday, 3600.0);
    let spray = Simulation::new(&spec, RouterKind::SprayAndWait, 9).run().unwrap();
    let mut calls = 0u64;
    let mut counting = FnPredictor(|_: &_| {
        calls += 1;
        1.0
    });
    // a negative ttl disables the cache, so every eligible encounter reaches the predictor
    gated(&spec, 9, &mut counting, DecisionCache::new(-1.0));
    let mut dead = UnavailablePredictor;
    let ml = gated(&spec, 9, &mut dead, DecisionCache::default());
    assert_eq!(ml.fingerprint(), spray.fingerprint());
    assert_eq!(ml.stats.gate.fallbacks, calls);
    assert!(calls > 0);
}

#[test]
fn routers_see_identical_contacts() {
    let spec = short_spec(10, 10, Regime::Weekday, 2400.0);
    let logs: Vec<_> = [RouterKind::Epidemic, RouterKind::SprayAndWait, RouterKind::Random]
        .into_iter()
        .map(|r| Simulation::new(&spec, r, 21).run().unwrap().contact_log)
        .collect();
    assert!(!logs[0].is_empty());
    assert_eq!(logs[0], logs[1]);
    assert_eq!(logs[1], logs[2]);
}

#[test]
fn coin_gate_is_fair() {
    let mut gate = CoinGate { rng: ChaCha8Rng::seed_from_u64(17) };
    let yes = (0..10_000).filter(|_| gate.flip()).count();
    let rate = yes as f64 / 10_000.0;
    assert!((0.48..=0.52).contains(&rate), "{rate}");
}

fn five_nodes(duration: f64) -> ScenarioSpec {
    let mut spec = ScenarioSpec::default().with_nodes(2, 1).with_duration(duration);
    spec.map.source = MapSource::Grid { rows: 3, cols: 3, spacing: 50.0 };
    spec.traffic.destinations = Destinations::Explicit(vec![NodeId::hospital(4)]);
    spec
}

fn contact(t0: f64, t1: f64, a: NodeId, b: NodeId) -> [ContactEvent; 2] {
    [ContactEvent::new(t0, a, b, LinkChange::Up), ContactEvent::new(t1, a, b, LinkChange::Down)]
}

fn script(contacts: &[[ContactEvent; 2]]) -> Vec<ContactEvent> {
    let mut v: Vec<ContactEvent> = contacts.iter().flatten().cloned().collect();
    v.sort_by(|x, y| x.time.total_cmp(&y.time));
    v
}

#[test]
fn degree_gate_matches_hand_enumeration() {
    let (p0, p1, c2, a3) = (NodeId::pedestrian(0), NodeId::pedestrian(1), NodeId::car(2), NodeId::accident(3));
    let spec = five_nodes(120.0);
    let contacts = script(&[
        contact(2.0, 3.0, p0, p1),
        contact(4.0, 5.0, p0, c2),
        contact(10.0, 30.0, a3, p0), // p0 has met p1, c2, a3: relay
        contact(40.0, 50.0, a3, p1), // p1 has met p0, a3: refuse
        contact(52.0, 55.0, p0, c2), // c2 has met p0 only: refuse
        contact(60.0, 65.0, p1, c2),
        contact(70.0, 78.0, p0, p1), // p1 now at three: relay
        contact(80.0, 90.0, a3, c2), // c2 now at three: relay
    ]);
    let msg = ScriptedMessage { time: 1.0, source: a3, destination: NodeId::hospital(4), size: 500_000 };
    let mut by_degree = FnPredictor(|q: &dtnlab_core::routing::RelayQuery| if q.degree >= 3.0 { 1.0 } else { 0.0 });
    let out = Simulation::new(&spec, RouterKind::MlGated, 1)
        .ml_gate(MlGate::new(&mut by_degree, DEFAULTS, None))
        .scripted_contacts(contacts)
        .scripted_traffic(vec![msg])
        .audit(true)
        .run()
        .unwrap();
    let hops: Vec<(NodeId, NodeId)> = out.relay_log.iter().map(|r| (r.from, r.to)).collect();
    assert_eq!(hops, vec![(a3, p0), (p0, p1), (a3, c2)]);
    assert_eq!(out.stats.gate.decisions, 5);
    assert_eq!(out.stats.gate.relayed, 3);
    assert!(out.stats.audit.unwrap().violations.is_empty());
}

/// Earliest arrival of a message along time-respecting contact chains, with
/// each hop needing `transfer` seconds of the contact still to run.
fn earliest_arrival(events: &[ContactEvent], source: NodeId, dest: NodeId, created: f64, transfer: f64) -> Option<f64> {
    let mut intervals = Vec::new();
    let mut open = std::collections::HashMap::new();
    for e in events {
        match e.kind {
            LinkChange::Up => {
                open.insert(e.pair(), e.time);
            }
            LinkChange::Down => {
                let start = open.remove(&e.pair()).unwrap();
                intervals.push((e.pair(), start, e.time));
            }
        }
    }
    let mut reached: std::collections::HashMap<NodeId, f64> = [(source, created)].into();
    loop {
        let mut changed = false;
        for &((a, b), start, end) in &intervals {
            for (from, to) in [(a, b), (b, a)] {
                if let Some(&t) = reached.get(&from) {
                    let done = t.max(start) + transfer;
                    if done <= end && reached.get(&to).is_none_or(|&old| done < old) {
                        reached.insert(to, done);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return reached.get(&dest).copied();
        }
    }
}

#[test]
fn epidemic_delivers_what_the_contact_chain_allows() {
    let (p0, p1, a3, h4) = (NodeId::pedestrian(0), NodeId::pedestrian(1), NodeId::accident(3), NodeId::hospital(4));
    let spec = five_nodes(200.0);
    let contacts = script(&[
        contact(10.0, 30.0, a3, p0),
        contact(40.0, 60.0, p0, p1),
        contact(70.0, 90.0, p1, h4),
        contact(100.0, 110.0, a3, p1),
    ]);
    let messages: Vec<ScriptedMessage> = [1.0, 5.0, 50.0, 95.0, 120.0]
        .iter()
        .map(|&t| ScriptedMessage { time: t, source: a3, destination: h4, size: 500_000 })
        .collect();
    let out = Simulation::new(&spec, RouterKind::Epidemic, 1)
        .scripted_contacts(contacts.clone())
        .scripted_traffic(messages.clone())
        .run()
        .unwrap();
    let delivered: Vec<f64> = out.delivery_log.iter().map(|d| d.time - d.delivery_time).collect();
    let expected: Vec<f64> = messages
        .iter()
        .filter(|m| earliest_arrival(&contacts, a3, h4, m.time, 2.0).is_some())
        .map(|m| m.time)
        .collect();
    assert_eq!(expected, vec![1.0, 5.0]);
    let mut delivered_sorted = delivered;
    delivered_sorted.sort_by(f64::total_cmp);
    assert_eq!(delivered_sorted, expected);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn spray_copies_are_conserved(
        p in 4u32..16,
        c in 4u32..16,
        holiday in any::<bool>(),
        seed in 0u64..1000,
        binary in any::<bool>(),
    ) {
        let regime = if holiday { Regime::Holiday } else { Regime::Weekday };
        let mut spec = short_spec(p, c, regime, 1800.0);
        spec.spray.binary = binary;
        for router in [RouterKind::SprayAndWait, RouterKind::Random] {
            let out = Simulation::new(&spec, router, seed).audit(true).run().unwrap();
            let audit = out.stats.audit.unwrap();
            prop_assert!(audit.checks > 0);
            prop_assert!(audit.violations.is_empty(), "{:?}", audit.violations);
        }
    }
}
