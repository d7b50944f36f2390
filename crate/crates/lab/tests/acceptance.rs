//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a hard criterion fails. Criteria 11 and 12 are directional
//! and reported without failing the run.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dtnlab::desk;
use dtnlab::pipeline::{self, PredictorChoice};
use dtnlab::sweep::{self, SweepConfig};
use dtnlab_core::features::{compute_scores, extract_features, label_by_median, DatasetOptions, NodeFeatureRow, UNIFORM_WEIGHTS};
use dtnlab_core::metrics::{compute_metrics, RunMetrics};
use dtnlab_core::ml::{roc_auc, Mlp, ModelArtifact, ModelKind, TrainConfig};
use dtnlab_core::mobility::Regime;
use dtnlab_core::reports::*;
use dtnlab_core::routing::predictor::FnPredictor;
use dtnlab_core::routing::{DecisionCache, MlGate, RelayQuery};
use dtnlab_core::{NodeId, RouterKind, Simulation};
use dtnlab_serve::{predict_inprocess, spawn, HttpPredictor};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn node(rng: &mut impl Rng, pool: u32) -> NodeId {
    let i = rng.gen_range(0..pool);
    match rng.gen_range(0..4) {
        0 => NodeId::pedestrian(i),
        1 => NodeId::car(i),
        2 => NodeId::accident(i),
        _ => NodeId::hospital(i),
    }
}

fn distinct_pair(rng: &mut impl Rng, roster: &[NodeId]) -> (NodeId, NodeId) {
    loop {
        let (a, b) = (*roster.choose(rng).unwrap(), *roster.choose(rng).unwrap());
        if a != b {
            return (a, b);
        }
    }
}

/// Valid up/down sequence on a 0.25 s grid; some contacts stay open.
fn random_contacts(rng: &mut impl Rng, roster: &[NodeId], n: usize) -> Vec<ContactEvent> {
    let mut open = HashSet::new();
    let mut t = 0.0;
    let mut events = Vec::with_capacity(n);
    for _ in 0..n {
        t += 0.25 * f64::from(rng.gen_range(0u32..8));
        let (a, b) = distinct_pair(rng, roster);
        let key = if a < b { (a, b) } else { (b, a) };
        let kind = if open.remove(&key) {
            LinkChange::Down
        } else {
            open.insert(key);
            LinkChange::Up
        };
        events.push(ContactEvent::new(t, a, b, kind));
    }
    events
}

fn random_deliveries(rng: &mut impl Rng, roster: &[NodeId], n: usize) -> Vec<DeliveryRecord> {
    (0..n)
        .map(|i| {
            let len = rng.gen_range(2..8);
            let path: Vec<NodeId> = (0..len).map(|_| *roster.choose(rng).unwrap()).collect();
            let delay = 0.25 * f64::from(rng.gen_range(0u32..40_000));
            DeliveryRecord {
                time: delay + 0.25 * f64::from(rng.gen_range(0u32..4000)),
                id: format!("AC{i}"),
                size: rng.gen_range(1..2_000_000),
                hopcount: len as u32 - 1,
                delivery_time: delay,
                from_host: path[0],
                to_host: *path.last().unwrap(),
                remaining_ttl: rng.gen_range(0..300),
                is_response: rng.gen_bool(0.1),
                path,
            }
        })
        .collect()
}

fn c1_determinism() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mixes = desk::desk_mixes();
    let routers = [RouterKind::SprayAndWait, RouterKind::Random, RouterKind::Epidemic];
    let (mut checks, mut problems) = (0u64, Vec::new());
    for i in 0..20 {
        let mix = *mixes.choose(&mut rng).unwrap();
        let regime = if rng.gen_bool(0.5) { Regime::Weekday } else { Regime::Holiday };
        let spec = desk::scenario(mix, regime, false);
        let seed = rng.gen_range(1..10_000);
        let router = routers[i % routers.len()];
        let run = || Simulation::new(&spec, router, seed).audit(true).run().unwrap();
        let (a, b) = (run(), run());
        if a.fingerprint() != b.fingerprint() {
            problems.push(format!("{} {router} seed {seed} not reproducible", spec.scenario_id()));
        }
        let audit = a.stats.audit.clone().unwrap_or_default();
        checks += audit.checks;
        problems.extend(audit.violations);
        if router != RouterKind::Epidemic {
            let other = Simulation::new(&spec, RouterKind::Epidemic, seed).run().unwrap();
            if other.contact_log != a.contact_log {
                problems.push(format!("{} seed {seed}: contacts depend on the router", spec.scenario_id()));
            }
        }
    }
    outcome(problems.is_empty() && checks > 0, format!("20 runs, {checks} copy audits, {} problems {:?}", problems.len(), problems.first()))
}

fn c2_formats() -> Outcome {
    let conn = include_str!("../../core/tests/data/connectivity_excerpt.txt");
    let deliv = include_str!("../../core/tests/data/delivered_excerpt.txt");
    let golden = parse_connectivity(conn).is_ok_and(|e| e.len() == 9 && write_connectivity(&e) == conn)
        && parse_delivered(deliv).is_ok_and(|d| d.len() == 7 && write_delivered(&d) == deliv);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let roster: Vec<NodeId> = (0..200).map(|_| node(&mut rng, 300)).collect::<HashSet<_>>().into_iter().collect();
    let n = 10_000;
    let contacts: Vec<ContactEvent> = (0..n)
        .map(|_| {
            let (a, b) = distinct_pair(&mut rng, &roster);
            let kind = if rng.gen_bool(0.5) { LinkChange::Up } else { LinkChange::Down };
            ContactEvent::new(f64::from(rng.gen_range(0u32..5_000_000)) / 100.0, a, b, kind)
        })
        .collect();
    let deliveries = random_deliveries(&mut rng, &roster, n);
    let relays: Vec<RelayRecord> = (0..n)
        .map(|i| RelayRecord {
            time: f64::from(rng.gen_range(0u32..500_000_000)) / 10_000.0,
            id: format!("AC{}", i % 300),
            from: *roster.choose(&mut rng).unwrap(),
            to: *roster.choose(&mut rng).unwrap(),
        })
        .collect();
    let kinds = [BufferEventKind::Created, BufferEventKind::Handoff, BufferEventKind::Evicted, BufferEventKind::Expired, BufferEventKind::Rejected];
    let buffer: Vec<BufferEvent> = (0..n)
        .map(|i| BufferEvent {
            time: f64::from(rng.gen_range(0u32..500_000_000)) / 10_000.0,
            node: *roster.choose(&mut rng).unwrap(),
            id: format!("AC{}", i % 300),
            kind: *kinds.choose(&mut rng).unwrap(),
            residency: f64::from(rng.gen_range(0u32..80_000_000)) / 10_000.0,
        })
        .collect();
    let trips = parse_connectivity(&write_connectivity(&contacts)).ok() == Some(contacts)
        && parse_delivered(&write_delivered(&deliveries)).ok() == Some(deliveries)
        && parse_relays(&write_relays(&relays)).ok() == Some(relays)
        && parse_buffer_events(&write_buffer_events(&buffer)).ok() == Some(buffer);
    outcome(golden && trips, format!("golden excerpts {golden}, four 10^4-event round-trips {trips}"))
}

#[derive(Default, Clone, PartialEq, Debug)]
struct Recount {
    contacts: u64,
    partners: usize,
    duration: f64,
    relayed: u64,
    hops: u64,
    delay: f64,
    destination: u64,
}

/// Recounts node features straight from the report text, pair by pair.
fn brute_features(conn_text: &str, deliv_text: &str, end: f64, roster: &[NodeId]) -> BTreeMap<String, Recount> {
    let mut by_pair: BTreeMap<(String, String), Vec<(f64, bool)>> = BTreeMap::new();
    for line in conn_text.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        let t: f64 = f[0].trim_start_matches('@').parse().unwrap();
        let (a, b) = if f[1] < f[3] { (f[1], f[3]) } else { (f[3], f[1]) };
        by_pair.entry((a.into(), b.into())).or_default().push((t, f[4] == "up"));
    }
    let mut out: BTreeMap<String, Recount> = roster.iter().map(|n| (n.to_string(), Recount::default())).collect();
    let mut partners: HashMap<String, HashSet<String>> = HashMap::new();
    for ((a, b), events) in &by_pair {
        let mut spans = Vec::new();
        let mut start = None;
        for &(t, up) in events {
            if up {
                start = Some(t);
            } else {
                spans.push(t - start.take().unwrap());
            }
        }
        if let Some(s) = start {
            spans.push((end - s).max(0.0));
        }
        for (me, other) in [(a, b), (b, a)] {
            let r = out.entry(me.clone()).or_default();
            r.contacts += spans.len() as u64;
            r.duration += spans.iter().sum::<f64>();
            if !spans.is_empty() {
                partners.entry(me.clone()).or_default().insert(other.clone());
            }
        }
    }
    for (n, p) in partners {
        out.get_mut(&n).unwrap().partners = p.len();
    }
    for line in deliv_text.lines().skip(1) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let path: Vec<&str> = f[9].split("->").collect();
        let hops: u64 = f[3].parse().unwrap();
        let delay: f64 = f[4].parse().unwrap();
        for relay in &path[1..path.len() - 1] {
            let r = out.entry(relay.to_string()).or_default();
            r.relayed += 1;
            r.hops += hops;
            r.delay += delay;
        }
        out.entry(f[6].to_string()).or_default().destination += 1;
        out.entry(f[5].to_string()).or_default();
    }
    out
}

fn c3_feature_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    let mut events = 0;
    for case in 0..100 {
        let roster: Vec<NodeId> =
            (0..rng.gen_range(3..40)).map(|_| node(&mut rng, 60)).collect::<HashSet<_>>().into_iter().collect();
        if roster.len() < 2 {
            continue;
        }
        let (nc, nd) = (rng.gen_range(0..9_000), rng.gen_range(0..1_000));
        let contacts = random_contacts(&mut rng, &roster, nc);
        let deliveries = random_deliveries(&mut rng, &roster, nd);
        events += contacts.len() + deliveries.len();
        let end = contacts.last().map_or(0.0, |e| e.time) + 0.25 * f64::from(rng.gen_range(0u32..100));
        let rows = extract_features(&format!("case{case}"), &contacts, &deliveries, end, &roster).unwrap();
        let oracle = brute_features(&write_connectivity(&contacts), &write_delivered(&deliveries), end, &roster);
        let avg = |total: f64, n: u64| (n > 0).then(|| total / n as f64);
        let same = rows.len() == oracle.len()
            && rows.iter().all(|r| {
                let o = &oracle[&r.node.to_string()];
                r.contact_freq == o.contacts as f64
                    && r.degree == o.partners as f64
                    && r.as_relay_count == o.relayed as f64
                    && r.as_destination_count == o.destination as f64
                    && r.avg_contact_duration == avg(o.duration, o.contacts).unwrap_or(0.0)
                    && r.avg_hop_count == avg(o.hops as f64, o.relayed)
                    && r.avg_delivery_time == avg(o.delay, o.relayed)
            });
        if !same {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("100 random log pairs, {events} events, {mismatches} mismatches"))
}

fn random_rows(rng: &mut impl Rng, n: usize) -> Vec<NodeFeatureRow> {
    (0..n)
        .map(|i| {
            let relayed = rng.gen_range(0u32..12);
            NodeFeatureRow {
                scenario_id: "s".into(),
                node: NodeId::car(i as u32),
                contact_freq: f64::from(rng.gen_range(0u32..2000)),
                degree: f64::from(rng.gen_range(0u32..80)),
                avg_contact_duration: rng.gen_range(0.0..60.0),
                avg_hop_count: (relayed > 0).then(|| rng.gen_range(2.0..8.0)),
                avg_delivery_time: (relayed > 0).then(|| rng.gen_range(10.0..7000.0)),
                as_relay_count: f64::from(relayed),
                as_destination_count: f64::from(rng.gen_range(0u32..4)),
                score: 0.0,
                label: 0,
            }
        })
        .collect()
}

fn c4_labeling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut unbalanced, mut flipped, mut checked) = (0, 0, 0);
    for _ in 0..200 {
        let n = rng.gen_range(2..120);
        let mut rows = random_rows(&mut rng, n);
        compute_scores(&mut rows, &UNIFORM_WEIGHTS).unwrap();
        label_by_median(&mut rows);
        let mut scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
        scores.sort_by(f64::total_cmp);
        scores.dedup();
        if scores.len() == rows.len() {
            checked += 1;
            let ones = rows.iter().filter(|r| r.label == 1).count() as i64;
            if (rows.len() as i64 - 2 * ones).abs() > 1 {
                unbalanced += 1;
            }
        }
        for col in 0..7 {
            let factor = 10f64.powf(rng.gen_range(-2.0..2.0));
            let mut scaled = rows.clone();
            scaled.iter_mut().for_each(|r| r.scale_feature(col, factor));
            compute_scores(&mut scaled, &UNIFORM_WEIGHTS).unwrap();
            label_by_median(&mut scaled);
            if scaled.iter().zip(&rows).any(|(a, b)| a.label != b.label) {
                flipped += 1;
            }
        }
    }
    outcome(unbalanced == 0 && flipped == 0, format!("{checked} distinct-score cohorts, {unbalanced} unbalanced; 1400 rescalings, {flipped} changed labels"))
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    let (u, v): (f64, f64) = (rng.gen_range(f64::EPSILON..1.0), rng.gen());
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn accuracy(net: &Mlp, x: &[Vec<f64>], y: &[u8]) -> f64 {
    x.iter().zip(y).filter(|(r, &t)| u8::from(net.forward(r).unwrap() >= 0.5) == t).count() as f64 / y.len() as f64
}

fn c5_mlp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = Mlp::new(&[7, 5, 3, 1], &mut rng);
    let xs: Vec<Vec<f64>> = (0..16).map(|_| (0..7).map(|_| gaussian(&mut rng)).collect()).collect();
    let ys: Vec<u8> = (0..16).map(|i| u8::from(i % 3 == 0)).collect();
    let analytic: Vec<f64> =
        net.gradients(&xs, &ys).0.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect();
    let mut worst: f64 = 0.0;
    for (k, g) in analytic.iter().enumerate() {
        let orig = *net.params_mut().nth(k).unwrap();
        *net.params_mut().nth(k).unwrap() = orig + 1e-6;
        let up = net.loss(&xs, &ys);
        *net.params_mut().nth(k).unwrap() = orig - 1e-6;
        let down = net.loss(&xs, &ys);
        *net.params_mut().nth(k).unwrap() = orig;
        let num = (up - down) / 2e-6;
        worst = worst.max((num - g).abs() / (num.abs() + g.abs()).max(1e-8));
    }
    let blob = |rng: &mut ChaCha8Rng, n: usize| -> (Vec<Vec<f64>>, Vec<u8>) {
        (0..n)
            .map(|i| {
                let c = if i % 2 == 1 { 2.5 } else { -2.5 };
                ((0..7).map(|_| c + gaussian(rng)).collect(), (i % 2) as u8)
            })
            .unzip()
    };
    let (bx, by) = blob(&mut rng, 400);
    let (tbx, tby) = blob(&mut rng, 200);
    let cfg = TrainConfig { hidden: vec![16, 8], max_epochs: 60, ..TrainConfig::default() };
    let blobs = accuracy(&dtnlab_core::ml::train_mlp(&bx, &by, None, &cfg).unwrap().0, &tbx, &tby);
    let xor = |rng: &mut ChaCha8Rng, n: usize| -> (Vec<Vec<f64>>, Vec<u8>) {
        (0..n)
            .map(|_| {
                let (a, b) = (rng.gen_bool(0.5), rng.gen_bool(0.5));
                let mut row = vec![0.0; 7];
                row[0] = if a { 1.0 } else { -1.0 } + 0.1 * gaussian(rng);
                row[1] = if b { 1.0 } else { -1.0 } + 0.1 * gaussian(rng);
                (row, u8::from(a != b))
            })
            .unzip()
    };
    let (xx, xy) = xor(&mut rng, 400);
    let (txx, txy) = xor(&mut rng, 200);
    let cfg = TrainConfig { hidden: vec![16, 8], learning_rate: 1e-2, max_epochs: 300, ..TrainConfig::default() };
    let xor_acc = accuracy(&dtnlab_core::ml::train_mlp(&xx, &xy, None, &cfg).unwrap().0, &txx, &txy);
    let zero = Mlp::zeros(&[7, 5, 3, 1]).forward(&[0.3; 7]).unwrap();
    outcome(
        worst < 1e-4 && blobs >= 0.99 && xor_acc >= 0.95 && zero == 0.5,
        format!("grad rel err {worst:.2e}, blobs {blobs:.3}, xor {xor_acc:.3}, zero net {zero}"),
    )
}

fn c6_auc() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bad = 0;
    for _ in 0..500 {
        let n = rng.gen_range(1..=200);
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.4))).collect();
        let s: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0u32..25)) / 8.0).collect();
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if y[i] == 1 && y[j] == 0 {
                    pairs += 1.0;
                    wins += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        if roc_auc(&y, &s) != (pairs > 0.0).then(|| wins / pairs) {
            bad += 1;
        }
    }
    let hand = roc_auc(&[1, 0, 1, 0], &[0.9, 0.8, 0.4, 0.1]);
    outcome(bad == 0 && hand == Some(0.75), format!("500 tied vectors, {bad} mismatches; hand case {hand:?}"))
}

fn text_metrics(dir: &std::path::Path) -> RunMetrics {
    let read = |f: &str| std::fs::read_to_string(dir.join(f)).unwrap();
    let (deliv, relay, buffer) = (read(dtnlab_core::SimOutput::DELIVERED_FILE), read(dtnlab_core::SimOutput::RELAY_FILE), read(dtnlab_core::SimOutput::BUFFER_FILE));
    let (mut seen, mut latency, mut hops) = (HashSet::new(), 0.0, 0.0);
    for line in deliv.lines().skip(1) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if seen.insert(f[1].to_string()) {
            latency += f[4].parse::<f64>().unwrap();
            hops += f[3].parse::<f64>().unwrap();
        }
    }
    let relayed = relay.lines().skip(1).count() as u64;
    let (mut created, mut stays, mut stay_sum) = (0u64, 0u64, 0.0);
    for line in buffer.lines().skip(1) {
        let f: Vec<&str> = line.split_whitespace().collect();
        match f[3] {
            "created" => created += 1,
            "handoff" | "evicted" | "expired" => {
                stays += 1;
                stay_sum += f[4].parse::<f64>().unwrap();
            }
            _ => {}
        }
    }
    let d = seen.len() as u64;
    let per = |v: f64| (d > 0).then(|| v / d as f64);
    RunMetrics {
        created,
        delivered: d,
        relayed,
        delivery_probability: if created > 0 { d as f64 / created as f64 } else { 0.0 },
        overhead_ratio: per(relayed as f64 - d as f64),
        latency_avg: per(latency),
        buffertime_avg: (stays > 0).then(|| stay_sum / stays as f64),
        hopcount_avg: per(hops),
    }
}

fn c7_metrics() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut problems = Vec::new();
    for (i, router) in [RouterKind::SprayAndWait, RouterKind::Random, RouterKind::Epidemic].into_iter().enumerate() {
        let spec = desk::scenario((20, 20), if i % 2 == 0 { Regime::Weekday } else { Regime::Holiday }, false);
        let out = Simulation::new(&spec, router, 70 + i as u64).run().unwrap();
        let dir = tmp.path().join(i.to_string());
        out.write_reports(&dir).unwrap();
        let oracle = text_metrics(&dir);
        let read = |f: &str| std::fs::read_to_string(dir.join(f)).unwrap();
        let parsed = compute_metrics(
            &parse_delivered(&read(dtnlab_core::SimOutput::DELIVERED_FILE)).unwrap(),
            &parse_relays(&read(dtnlab_core::SimOutput::RELAY_FILE)).unwrap(),
            &parse_buffer_events(&read(dtnlab_core::SimOutput::BUFFER_FILE)).unwrap(),
            oracle.created,
        );
        let live = RunMetrics::from_output(&out);
        if parsed != oracle {
            problems.push(format!("{router}: {parsed:?} vs {oracle:?}"));
        }
        let counts = |m: &RunMetrics| (m.created, m.delivered, m.relayed, m.delivery_probability, m.overhead_ratio);
        if counts(&live) != counts(&oracle) {
            problems.push(format!("{router}: live counts differ"));
        }
    }
    let (a, h) = (NodeId::accident(0), NodeId::hospital(1));
    let deliveries: Vec<DeliveryRecord> = (0..72)
        .map(|i| DeliveryRecord {
            time: 1.0,
            id: format!("AC{i}"),
            size: 1,
            hopcount: 1,
            delivery_time: 1.0,
            from_host: a,
            to_host: h,
            remaining_ttl: 0,
            is_response: false,
            path: vec![a, h],
        })
        .collect();
    let relays: Vec<RelayRecord> = (0..551).map(|_| RelayRecord { time: 1.0, id: "AC0".into(), from: a, to: h }).collect();
    let hand = compute_metrics(&deliveries, &relays, &[], 100).overhead_ratio.unwrap_or(f64::NAN);
    let pass = problems.is_empty() && (hand - 479.0 / 72.0).abs() < 1e-9 && (hand - 6.6528).abs() < 5e-5;
    outcome(pass, format!("3 runs recounted from text, {} problems {:?}; (551, 72) -> {hand:.4}", problems.len(), problems.first()))
}

fn desk_model() -> ModelArtifact {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let net = Mlp::new(&[7, 16, 8, 1], &mut rng);
    let std = dtnlab_core::features::Standardizer { mean: vec![400.0, 50.0, 12.0, 2.5, 1500.0, 4.0, 0.5], std: vec![200.0, 10.0, 4.0, 1.0, 600.0, 3.0, 1.0] };
    let defaults = dtnlab_core::routing::FeatureDefaults { avg_hop_count: 2.5, avg_delivery_time: 1500.0, as_relay_count: 4.0 };
    ModelArtifact::new(dtnlab_core::ml::Classifier::Mlp(net), std, defaults, Some(7200.0))
}

fn random_query(rng: &mut impl Rng) -> RelayQuery {
    RelayQuery {
        contact_freq: rng.gen_range(0.0..1500.0),
        degree: rng.gen_range(0.0..80.0),
        avg_contact_duration: rng.gen_range(0.0..40.0),
        avg_hop_count: rng.gen_range(1.0..6.0),
        avg_delivery_time: rng.gen_range(0.0..7000.0),
        as_relay_count: f64::from(rng.gen_range(0u32..30)),
        as_destination_count: f64::from(rng.gen_range(0u32..3)),
    }
}

fn c8_serving() -> Outcome {
    let model = desk_model();
    let server = spawn(model.clone(), "127.0.0.1:0").unwrap();
    let mut client = HttpPredictor::new(&server.url(), Duration::from_secs(5));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let queries: Vec<RelayQuery> = (0..1000).map(|_| random_query(&mut rng)).collect();
    let identical = queries.iter().all(|q| {
        let (r, l) = (client.request(q).unwrap(), predict_inprocess(&model, q));
        r.label == l.label && r.probability.to_bits() == l.probability.to_bits()
    });
    for q in queries.iter().take(100) {
        std::hint::black_box(model.predict(q));
    }
    let t = Instant::now();
    for q in &queries {
        std::hint::black_box(model.predict(q));
    }
    let mean = t.elapsed().as_secs_f64() / queries.len() as f64;
    let mut cache = DecisionCache::default();
    let before = client.network_calls;
    for k in 0..20 {
        client.predict_cached(&mut cache, NodeId::car(1), &queries[0], 10.0 + f64::from(k)).unwrap();
    }
    let calls = client.network_calls - before;
    outcome(identical && mean < 1e-3 && calls == 1, format!("1000 requests identical {identical}, warm in-process {:.2} us, cache calls {calls}", mean * 1e6))
}

fn c9_fallback() -> Outcome {
    let model = desk_model();
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    for (mix, regime, seed) in [((20, 20), Regime::Weekday, 1), ((28, 28), Regime::Holiday, 2)] {
        let spec = desk::scenario(mix, regime, false);
        let spray = Simulation::new(&spec, RouterKind::SprayAndWait, seed).run().unwrap();
        let choice = PredictorChoice::Http(dead.to_string());
        let ml = pipeline::run_protocol(&spec, RouterKind::MlGated, seed, Some(&model), &choice, dtnlab_serve::DEFAULT_TIMEOUT).unwrap();
        let mut eligible = 0u64;
        let mut counting = FnPredictor(|_: &_| {
            eligible += 1;
            1.0
        });
        Simulation::new(&spec, RouterKind::MlGated, seed)
            .ml_gate(MlGate::new(&mut counting, model.defaults, model.horizon).with_cache(DecisionCache::new(-1.0)))
            .run()
            .unwrap();
        let same = RunMetrics::from_output(&ml) == RunMetrics::from_output(&spray);
        pass &= same && ml.stats.gate.fallbacks == eligible && eligible > 0;
        lines.push(format!("{} metrics equal {same}, fallbacks {} / eligible {eligible}", spec.scenario_id(), ml.stats.gate.fallbacks));
    }
    outcome(pass, lines.join("; "))
}

fn c10_classifier() -> (Outcome, ModelArtifact) {
    let mut specs = Vec::new();
    for mix in desk::desk_mixes() {
        for regime in [Regime::Weekday, Regime::Holiday] {
            specs.push(desk::scenario(mix, regime, false));
        }
    }
    let runs = pipeline::training_runs(&specs, &[101]).unwrap();
    let ds = pipeline::dataset_from_runs(&runs, &DatasetOptions::default()).unwrap();
    let trained = pipeline::train(&ds, ModelKind::Mlp, 1, None).unwrap();
    let r = &trained.report;
    let auc = r.auc.unwrap_or(0.0);
    (
        outcome(auc > 0.65 && r.accuracy > 0.65, format!("{} scenarios, {} test rows: AUC {auc:.3}, accuracy {:.3}", runs.len(), r.samples, r.accuracy)),
        trained.model,
    )
}

fn c11_c12_sweep(model: &ModelArtifact) -> (Outcome, Outcome) {
    let config = SweepConfig {
        mixes: vec![(20, 20), (28, 28)],
        regimes: vec![Regime::Weekday, Regime::Holiday],
        protocols: vec![RouterKind::SprayAndWait, RouterKind::MlGated, RouterKind::Random],
        seeds: vec![1, 2, 3],
        full: false,
        duration: None,
        predictor: PredictorChoice::InProcess,
        timeout_ms: 50,
    };
    let t = Instant::now();
    let result = sweep::run_sweep(&config, Some(model)).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let mean = |p, f: fn(&RunMetrics) -> Option<f64>| result.overall_mean(p, f).unwrap_or(f64::NAN);
    let dp = |m: &RunMetrics| Some(m.delivery_probability);
    let (sw, ml, rnd) = (RouterKind::SprayAndWait, RouterKind::MlGated, RouterKind::Random);
    let (dp_sw, dp_ml, dp_rnd) = (mean(sw, dp), mean(ml, dp), mean(rnd, dp));
    let (lat_sw, lat_ml, lat_rnd) = (mean(sw, |m| m.latency_avg), mean(ml, |m| m.latency_avg), mean(rnd, |m| m.latency_avg));
    let (ov_sw, ov_ml, ov_rnd) = (mean(sw, |m| m.overhead_ratio), mean(ml, |m| m.overhead_ratio), mean(rnd, |m| m.overhead_ratio));
    let fair = result.fairness_violations().is_empty();
    let c11 = outcome(
        fair && dp_ml >= dp_sw && lat_ml <= lat_sw && dp_rnd <= dp_ml,
        format!(
            "{} cells in {secs:.0}s; delivery S&W {dp_sw:.3} ML {dp_ml:.3} Random {dp_rnd:.3}; latency S&W {lat_sw:.0} ML {lat_ml:.0} Random {lat_rnd:.0}",
            result.records.len()
        ),
    );
    let c12 = outcome(ov_ml >= ov_sw, format!("overhead S&W {ov_sw:.3} ML {ov_ml:.3} Random {ov_rnd:.3}"));
    (c11, c12)
}

fn c13_regimes() -> Outcome {
    let count = |regime| -> f64 {
        let spec = desk::scenario((20, 20), regime, false);
        (1..=5).map(|s| Simulation::new(&spec, RouterKind::SprayAndWait, s).run().unwrap().contact_log.len() as f64).sum::<f64>() / 5.0
    };
    let (wd, hd) = (count(Regime::Weekday), count(Regime::Holiday));
    outcome(wd > hd, format!("mean contact events weekday {wd:.0}, holiday {hd:.0}"))
}

fn main() {
    // cargo passes harness flags; a listing request gets an empty list
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut hard_failures = 0;
    let mut report = |id: u32, name: &str, hard: bool, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let kind = if hard { "" } else { " (directional)" };
        println!("[{tag}] {id:>2} {name}{kind}: {} [{:.1}s]", o.detail, t.elapsed().as_secs_f64());
        if hard && !o.pass {
            hard_failures += 1;
        }
    };
    report(1, "determinism and copy conservation", true, &mut c1_determinism);
    report(2, "report format fidelity", true, &mut c2_formats);
    report(3, "feature extraction oracle", true, &mut c3_feature_oracle);
    report(4, "median-split labeling", true, &mut c4_labeling);
    report(5, "MLP numerics", true, &mut c5_mlp);
    report(6, "AUC oracle", true, &mut c6_auc);
    report(7, "metric oracle", true, &mut c7_metrics);
    report(8, "serving equivalence and latency", true, &mut c8_serving);
    report(9, "predictor fallback", true, &mut c9_fallback);
    let mut model = None;
    report(10, "classifier on desk scenarios", true, &mut || {
        let (o, m) = c10_classifier();
        model = Some(m);
        o
    });
    let model = model.expect("criterion 10 trains the model");
    let (c11, c12) = c11_c12_sweep(&model);
    let mut c11 = Some(c11);
    let mut c12 = Some(c12);
    report(11, "delivery and latency ordering", false, &mut || c11.take().unwrap());
    report(12, "overhead ordering", false, &mut || c12.take().unwrap());
    report(13, "weekday versus holiday contacts", true, &mut c13_regimes);
    if hard_failures > 0 {
        println!("{hard_failures} hard criteria failed");
        std::process::exit(1);
    }
}
