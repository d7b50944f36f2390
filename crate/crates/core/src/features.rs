//! Per-node features from simulation logs, score aggregation, median-split
//! labels, normalization and dataset assembly.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::node::NodeId;
use crate::reports::{ContactEvent, DeliveryRecord, LinkChange};
use crate::routing::{FeatureDefaults, RelayQuery};

pub const FEATURE_COUNT: usize = 7;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = RelayQuery::FIELDS;
/// Indices of features where smaller is better.
pub const REVERSED: [usize; 2] = [3, 4];
pub const UNIFORM_WEIGHTS: [f64; FEATURE_COUNT] = [1.0 / 7.0; FEATURE_COUNT];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("down event for {a} <-> {b} at {time:.2} has no matching up")]
    UnmatchedDown { a: NodeId, b: NodeId, time: f64 },
    #[error("up event for {a} <-> {b} at {time:.2} while the contact is already open")]
    DoubleUp { a: NodeId, b: NodeId, time: f64 },
    #[error("no rows to score")]
    Empty,
    #[error("dataset file {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeFeatureRow {
    pub scenario_id: String,
    pub node: NodeId,
    pub contact_freq: f64,
    pub degree: f64,
    pub avg_contact_duration: f64,
    /// Undefined for nodes that never relayed a delivered message.
    pub avg_hop_count: Option<f64>,
    pub avg_delivery_time: Option<f64>,
    pub as_relay_count: f64,
    pub as_destination_count: f64,
    pub score: f64,
    pub label: u8,
}

impl NodeFeatureRow {
    pub fn raw(&self) -> [Option<f64>; FEATURE_COUNT] {
        [
            Some(self.contact_freq),
            Some(self.degree),
            Some(self.avg_contact_duration),
            self.avg_hop_count,
            self.avg_delivery_time,
            Some(self.as_relay_count),
            Some(self.as_destination_count),
        ]
    }

    fn raw_mut(&mut self, i: usize) -> Option<&mut f64> {
        match i {
            0 => Some(&mut self.contact_freq),
            1 => Some(&mut self.degree),
            2 => Some(&mut self.avg_contact_duration),
            3 => self.avg_hop_count.as_mut(),
            4 => self.avg_delivery_time.as_mut(),
            5 => Some(&mut self.as_relay_count),
            6 => Some(&mut self.as_destination_count),
            _ => None,
        }
    }

    /// Classifier input: the raw features with undefined delivery stats
    /// replaced by `defaults`. The score never enters this vector.
    pub fn inputs(&self, defaults: &FeatureDefaults) -> [f64; FEATURE_COUNT] {
        [
            self.contact_freq,
            self.degree,
            self.avg_contact_duration,
            self.avg_hop_count.unwrap_or(defaults.avg_hop_count),
            self.avg_delivery_time.unwrap_or(defaults.avg_delivery_time),
            self.as_relay_count,
            self.as_destination_count,
        ]
    }

    pub fn scale_feature(&mut self, i: usize, factor: f64) {
        if let Some(v) = self.raw_mut(i) {
            *v *= factor;
        }
    }
}

#[derive(Default)]
struct Tally {
    contacts: u64,
    partners: HashSet<NodeId>,
    duration: f64,
    relayed: u64,
    hops: f64,
    delay: f64,
    destination: u64,
}

/// Counts per-node contact and relay statistics. Contacts still open at
/// `end_time` are closed there. Nodes in `roster` get a row even if they never
/// appear in the logs. Rows come out in node order.
pub fn extract_features(
    scenario_id: &str,
    contacts: &[ContactEvent],
    deliveries: &[DeliveryRecord],
    end_time: f64,
    roster: &[NodeId],
) -> Result<Vec<NodeFeatureRow>, FeatureError> {
    let mut tallies: BTreeMap<NodeId, Tally> = roster.iter().map(|&n| (n, Tally::default())).collect();
    let mut open: HashMap<(NodeId, NodeId), f64> = HashMap::new();
    let close = |tallies: &mut BTreeMap<NodeId, Tally>, a: NodeId, b: NodeId, span: f64| {
        for (me, other) in [(a, b), (b, a)] {
            let t = tallies.entry(me).or_default();
            t.contacts += 1;
            t.partners.insert(other);
            t.duration += span;
        }
    };
    for e in contacts {
        let pair = e.pair();
        match e.kind {
            LinkChange::Up => {
                if open.insert(pair, e.time).is_some() {
                    return Err(FeatureError::DoubleUp { a: pair.0, b: pair.1, time: e.time });
                }
            }
            LinkChange::Down => {
                let start = open
                    .remove(&pair)
                    .ok_or(FeatureError::UnmatchedDown { a: pair.0, b: pair.1, time: e.time })?;
                close(&mut tallies, pair.0, pair.1, e.time - start);
            }
        }
    }
    let mut still_open: Vec<_> = open.into_iter().collect();
    still_open.sort_by(|x, y| x.0.cmp(&y.0));
    for ((a, b), start) in still_open {
        close(&mut tallies, a, b, (end_time - start).max(0.0));
    }
    for d in deliveries {
        let n = d.path.len();
        if n >= 2 {
            for relay in &d.path[1..n - 1] {
                let t = tallies.entry(*relay).or_default();
                t.relayed += 1;
                t.hops += f64::from(d.hopcount);
                t.delay += d.delivery_time;
            }
        }
        tallies.entry(d.to_host).or_default().destination += 1;
        tallies.entry(d.from_host).or_default();
    }
    Ok(tallies
        .into_iter()
        .map(|(node, t)| NodeFeatureRow {
            scenario_id: scenario_id.to_string(),
            node,
            contact_freq: t.contacts as f64,
            degree: t.partners.len() as f64,
            avg_contact_duration: if t.contacts > 0 { t.duration / t.contacts as f64 } else { 0.0 },
            avg_hop_count: (t.relayed > 0).then(|| t.hops / t.relayed as f64),
            avg_delivery_time: (t.relayed > 0).then(|| t.delay / t.relayed as f64),
            as_relay_count: t.relayed as f64,
            as_destination_count: t.destination as f64,
            score: 0.0,
            label: 0,
        })
        .collect())
}

/// Min-max bounds per feature; reversed features map the minimum to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: [f64; FEATURE_COUNT],
    pub max: [f64; FEATURE_COUNT],
    pub reversed: Vec<usize>,
}

impl MinMax {
    /// Fits over the defined values of each column. A column with no defined
    /// value gets bounds (0, 0).
    pub fn fit<'r>(rows: impl IntoIterator<Item = &'r NodeFeatureRow>) -> Self {
        let mut min = [f64::INFINITY; FEATURE_COUNT];
        let mut max = [f64::NEG_INFINITY; FEATURE_COUNT];
        for row in rows {
            for (i, v) in row.raw().into_iter().enumerate() {
                if let Some(v) = v {
                    min[i] = min[i].min(v);
                    max[i] = max[i].max(v);
                }
            }
        }
        for i in 0..FEATURE_COUNT {
            if min[i] > max[i] {
                min[i] = 0.0;
                max[i] = 0.0;
            }
        }
        MinMax { min, max, reversed: REVERSED.to_vec() }
    }

    /// Normalized value of feature `i`, clamped to [0, 1]; constant columns give 0.5.
    pub fn normalize(&self, i: usize, x: f64) -> f64 {
        let span = self.max[i] - self.min[i];
        if span == 0.0 {
            return 0.5;
        }
        let v = if self.reversed.contains(&i) { (self.max[i] - x) / span } else { (x - self.min[i]) / span };
        v.clamp(0.0, 1.0)
    }

    /// Normalized row; undefined features count as 0, the worst value.
    pub fn transform(&self, row: &NodeFeatureRow) -> [f64; FEATURE_COUNT] {
        let raw = row.raw();
        std::array::from_fn(|i| raw[i].map_or(0.0, |x| self.normalize(i, x)))
    }
}

/// Sets each row's score to the weighted mean of its min-max normalized
/// features, with bounds taken over `rows`.
pub fn compute_scores(rows: &mut [NodeFeatureRow], weights: &[f64; FEATURE_COUNT]) -> Result<(), FeatureError> {
    if rows.is_empty() {
        return Err(FeatureError::Empty);
    }
    let total: f64 = weights.iter().sum();
    let mm = MinMax::fit(rows.iter());
    for row in rows.iter_mut() {
        let norm = mm.transform(row);
        row.score = norm.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / total;
    }
    Ok(())
}

/// Midpoint median of the scores.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Label 1 for rows strictly above the median score.
pub fn label_by_median(rows: &mut [NodeFeatureRow]) {
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let Some(m) = median(&scores) else { return };
    for row in rows {
        row.label = u8::from(row.score > m);
    }
}

/// Z-score standardizer with population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Standardizer { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        Standardizer { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| if *s == 0.0 { 0.0 } else { (x - m) / s })
            .collect()
    }

    pub fn transform_all(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform(r)).collect()
    }
}

/// One scenario's logs, as handed to [`assemble_dataset`].
pub struct ScenarioLogs<'a> {
    pub scenario_id: String,
    pub contacts: &'a [ContactEvent],
    pub deliveries: &'a [DeliveryRecord],
    pub end_time: f64,
    pub roster: &'a [NodeId],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub feature_names: Vec<String>,
    /// Columns present in the table but never fed to a classifier.
    pub excluded_from_inputs: Vec<String>,
    pub reversed: Vec<String>,
    pub weights: [f64; FEATURE_COUNT],
    pub split_seed: u64,
    pub test_fraction: f64,
    /// Training-split medians used for undefined delivery features.
    pub medians: FeatureDefaults,
    /// Min-max bounds fit on the training split.
    pub minmax: MinMax,
    /// Z-score statistics fit on the imputed training inputs.
    pub standardizer: Standardizer,
    /// Longest run length among the scenarios, seconds.
    pub horizon: f64,
    pub scenarios: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub rows: Vec<NodeFeatureRow>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub meta: DatasetMeta,
}

pub struct DatasetOptions {
    pub weights: [f64; FEATURE_COUNT],
    pub split_seed: u64,
    pub test_fraction: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions { weights: UNIFORM_WEIGHTS, split_seed: 7, test_fraction: 0.2 }
    }
}

/// Label-stratified split: `fraction` of each class (rounded) goes to the test side.
pub fn stratified_split(labels: &[u8], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let k = (idx.len() as f64 * fraction).round() as usize;
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Extracts, scores and labels each scenario on its own, concatenates the
/// rows and splits them.
pub fn assemble_dataset(scenarios: &[ScenarioLogs<'_>], options: &DatasetOptions) -> Result<Dataset, FeatureError> {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let mut horizon: f64 = 0.0;
    for s in scenarios {
        let mut part = extract_features(&s.scenario_id, s.contacts, s.deliveries, s.end_time, s.roster)?;
        if part.is_empty() {
            warnings.push(format!("{}: no nodes in logs", s.scenario_id));
            continue;
        }
        if s.deliveries.is_empty() {
            warnings.push(format!("{}: no deliveries, delivery features imputed", s.scenario_id));
        }
        compute_scores(&mut part, &options.weights)?;
        label_by_median(&mut part);
        horizon = horizon.max(s.end_time);
        rows.extend(part);
    }
    if rows.is_empty() {
        return Err(FeatureError::Empty);
    }
    let labels: Vec<u8> = rows.iter().map(|r| r.label).collect();
    let (train, test) = stratified_split(&labels, options.test_fraction, options.split_seed);
    let meta = fit_meta(&rows, &train, options, horizon, warnings);
    Ok(Dataset { rows, train, test, meta })
}

fn fit_meta(
    rows: &[NodeFeatureRow],
    train: &[usize],
    options: &DatasetOptions,
    horizon: f64,
    warnings: Vec<String>,
) -> DatasetMeta {
    let defined = |f: fn(&NodeFeatureRow) -> Option<f64>| -> Vec<f64> {
        train.iter().filter_map(|&i| f(&rows[i])).collect()
    };
    let medians = FeatureDefaults {
        avg_hop_count: median(&defined(|r| r.avg_hop_count)).unwrap_or(1.0),
        avg_delivery_time: median(&defined(|r| r.avg_delivery_time)).unwrap_or(0.0),
        as_relay_count: median(&defined(|r| (r.as_relay_count > 0.0).then_some(r.as_relay_count))).unwrap_or(0.0),
    };
    let inputs: Vec<Vec<f64>> = train.iter().map(|&i| rows[i].inputs(&medians).to_vec()).collect();
    let mut scenarios: Vec<String> = Vec::new();
    for r in rows {
        if !scenarios.contains(&r.scenario_id) {
            scenarios.push(r.scenario_id.clone());
        }
    }
    DatasetMeta {
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        excluded_from_inputs: vec!["score".into(), "label".into()],
        reversed: REVERSED.iter().map(|&i| FEATURE_NAMES[i].to_string()).collect(),
        weights: options.weights,
        split_seed: options.split_seed,
        test_fraction: options.test_fraction,
        medians,
        minmax: MinMax::fit(train.iter().map(|&i| &rows[i])),
        standardizer: Standardizer::fit(&inputs),
        horizon,
        scenarios,
        warnings,
    }
}

impl Dataset {
    pub fn inputs(&self, idx: &[usize]) -> Vec<Vec<f64>> {
        idx.iter().map(|&i| self.rows[i].inputs(&self.meta.medians).to_vec()).collect()
    }

    pub fn labels(&self, idx: &[usize]) -> Vec<u8> {
        idx.iter().map(|&i| self.rows[i].label).collect()
    }

    /// Standardized inputs and labels for the given rows.
    pub fn xy(&self, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<u8>) {
        (self.meta.standardizer.transform_all(&self.inputs(idx)), self.labels(idx))
    }

    pub fn meta_path(table: &Path) -> PathBuf {
        table.with_extension("meta.json")
    }

    /// Writes the table as CSV and the metadata as JSON next to it.
    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        let io = |e: &dyn std::fmt::Display| FeatureError::Io { path: path.to_path_buf(), message: e.to_string() };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| io(&e))?;
        }
        let test: HashSet<usize> = self.test.iter().copied().collect();
        let mut w = csv::Writer::from_path(path).map_err(|e| io(&e))?;
        let mut header = vec!["scenario_id", "node"];
        header.extend(FEATURE_NAMES);
        header.extend(["score", "label", "split"]);
        w.write_record(&header).map_err(|e| io(&e))?;
        for (i, r) in self.rows.iter().enumerate() {
            let mut rec = vec![r.scenario_id.clone(), r.node.to_string()];
            rec.extend(r.raw().iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            rec.push(r.score.to_string());
            rec.push(r.label.to_string());
            rec.push(if test.contains(&i) { "test" } else { "train" }.into());
            w.write_record(&rec).map_err(|e| io(&e))?;
        }
        w.flush().map_err(|e| io(&e))?;
        let meta = serde_json::to_string_pretty(&self.meta).map_err(|e| io(&e))?;
        std::fs::write(Self::meta_path(path), meta).map_err(|e| io(&e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let err = |m: String| FeatureError::Io { path: path.to_path_buf(), message: m };
        let meta_text = std::fs::read_to_string(Self::meta_path(path)).map_err(|e| err(format!("metadata: {e}")))?;
        let meta: DatasetMeta = serde_json::from_str(&meta_text).map_err(|e| err(format!("metadata: {e}")))?;
        let mut rdr = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
        let (mut rows, mut train, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let line = i + 2;
            if rec.len() != 12 {
                return Err(err(format!("line {line}: expected 12 fields, found {}", rec.len())));
            }
            let num = |k: usize| -> Result<Option<f64>, FeatureError> {
                let s = &rec[k];
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse::<f64>().map(Some).map_err(|_| err(format!("line {line}: bad number `{s}`")))
            };
            let req = |k: usize| -> Result<f64, FeatureError> {
                num(k)?.ok_or_else(|| err(format!("line {line}: field {} is empty", k + 1)))
            };
            let node: NodeId = rec[1].parse().map_err(|e| err(format!("line {line}: {e}")))?;
            let label: u8 = match &rec[10] {
                "0" => 0,
                "1" => 1,
                other => return Err(err(format!("line {line}: bad label `{other}`"))),
            };
            match &rec[11] {
                "train" => train.push(i),
                "test" => test.push(i),
                other => return Err(err(format!("line {line}: bad split `{other}`"))),
            }
            rows.push(NodeFeatureRow {
                scenario_id: rec[0].to_string(),
                node,
                contact_freq: req(2)?,
                degree: req(3)?,
                avg_contact_duration: req(4)?,
                avg_hop_count: num(5)?,
                avg_delivery_time: num(6)?,
                as_relay_count: req(7)?,
                as_destination_count: req(8)?,
                score: req(9)?,
                label,
            });
        }
        Ok(Dataset { rows, train, test, meta })
    }

    /// Mean and standard deviation of each feature and the score per label class.
    pub fn class_summary(&self) -> String {
        let mut out = String::from("label  feature                 mean          std\n");
        for class in [0u8, 1] {
            let members: Vec<&NodeFeatureRow> = self.rows.iter().filter(|r| r.label == class).collect();
            let mut columns: Vec<(&str, Vec<f64>)> = FEATURE_NAMES
                .iter()
                .enumerate()
                .map(|(i, name)| (*name, members.iter().filter_map(|r| r.raw()[i]).collect()))
                .collect();
            columns.push(("score", members.iter().map(|r| r.score).collect()));
            for (name, vals) in columns {
                let n = vals.len().max(1) as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                out.push_str(&format!("{class:<6} {name:<22} {mean:>12.4} {std:>12.4}\n"));
            }
        }
        out
    }
}
