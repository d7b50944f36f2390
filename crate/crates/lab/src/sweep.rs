//! Factorial protocol comparison and its summaries.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use dtnlab_core::metrics::RunMetrics;
use dtnlab_core::ml::ModelArtifact;
use dtnlab_core::mobility::Regime;
use dtnlab_core::reports::write_connectivity;
use dtnlab_core::routing::GateCounters;
use dtnlab_core::RouterKind;

use crate::desk;
use crate::manifest::sha256_hex;
use crate::pipeline::{run_protocol, PredictorChoice};

/// Column order of the summary tables.
pub const PROTOCOL_ORDER: [RouterKind; 4] =
    [RouterKind::SprayAndWait, RouterKind::MlGated, RouterKind::Random, RouterKind::Epidemic];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub mixes: Vec<(u32, u32)>,
    pub regimes: Vec<Regime>,
    pub protocols: Vec<RouterKind>,
    pub seeds: Vec<u64>,
    pub full: bool,
    /// Overrides the profile's run length, seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    pub predictor: PredictorChoice,
    pub timeout_ms: u64,
}

impl SweepConfig {
    pub fn cell_count(&self) -> usize {
        self.mixes.len() * self.regimes.len() * self.protocols.len() * self.seeds.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub protocol: RouterKind,
    pub scenario: String,
    pub regime: Regime,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub gate: GateCounters,
    pub contact_events: usize,
    /// SHA-256 of the connectivity report.
    pub contact_digest: String,
}

impl CellRecord {
    pub fn file_name(&self) -> String {
        format!("{}_{}_{}_s{}.json", self.scenario, self.regime.as_str(), self.protocol.cli_name(), self.seed)
    }
}

/// Mean and sample standard deviation; the deviation is 0 for a single value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanStd { mean, std, n })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub protocol: RouterKind,
    pub regime: Regime,
    /// A scenario id, or `pooled` for all scenarios together.
    pub scenario: String,
    pub delivery_probability: Option<MeanStd>,
    pub overhead_ratio: Option<MeanStd>,
    pub latency_avg: Option<MeanStd>,
    pub buffertime_avg: Option<MeanStd>,
}

pub const POOLED: &str = "pooled";

pub fn aggregate(records: &[CellRecord]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, &str, RouterKind), Vec<&CellRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.scenario.clone(), r.regime.as_str(), r.protocol)).or_default().push(r);
        groups.entry((POOLED.to_string(), r.regime.as_str(), r.protocol)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((scenario, _, protocol), rs)| {
            let pick = |f: fn(&RunMetrics) -> Option<f64>| {
                MeanStd::of(&rs.iter().filter_map(|r| f(&r.metrics)).collect::<Vec<_>>())
            };
            Aggregate {
                protocol,
                regime: rs[0].regime,
                scenario,
                delivery_probability: pick(|m| Some(m.delivery_probability)),
                overhead_ratio: pick(|m| m.overhead_ratio),
                latency_avg: pick(|m| m.latency_avg),
                buffertime_avg: pick(|m| m.buffertime_avg),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub records: Vec<CellRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepResult {
    pub fn find(&self, protocol: RouterKind, regime: Option<Regime>, scenario: &str) -> Vec<&Aggregate> {
        self.aggregates
            .iter()
            .filter(|a| a.protocol == protocol && a.scenario == scenario && regime.is_none_or(|r| a.regime == r))
            .collect()
    }

    /// Mean of a metric over every record of one protocol.
    pub fn overall_mean(&self, protocol: RouterKind, metric: fn(&RunMetrics) -> Option<f64>) -> Option<f64> {
        let v: Vec<f64> = self.records.iter().filter(|r| r.protocol == protocol).filter_map(|r| metric(&r.metrics)).collect();
        MeanStd::of(&v).map(|m| m.mean)
    }

    /// Cells of one (scenario, regime, seed) whose contact logs differ.
    pub fn fairness_violations(&self) -> Vec<String> {
        let mut first: BTreeMap<(String, &str, u64), &str> = BTreeMap::new();
        let mut bad = Vec::new();
        for r in &self.records {
            let key = (r.scenario.clone(), r.regime.as_str(), r.seed);
            match first.get(&key) {
                Some(d) if *d != r.contact_digest => {
                    bad.push(format!("{} {} seed {} under {}", r.scenario, r.regime.as_str(), r.seed, r.protocol))
                }
                Some(_) => {}
                None => {
                    first.insert(key, &r.contact_digest);
                }
            }
        }
        bad
    }
}

/// Runs every cell, spreading them over the available cores. Records come
/// back in grid order regardless of completion order.
pub fn run_sweep(config: &SweepConfig, model: Option<&ModelArtifact>) -> anyhow::Result<SweepResult> {
    if config.protocols.contains(&RouterKind::MlGated) && model.is_none() {
        bail!("{} is in the sweep but no model was given", RouterKind::MlGated.label());
    }
    let mut cells = Vec::with_capacity(config.cell_count());
    for &mix in &config.mixes {
        for &regime in &config.regimes {
            for &seed in &config.seeds {
                for &protocol in &config.protocols {
                    cells.push((mix, regime, seed, protocol));
                }
            }
        }
    }
    let timeout = Duration::from_millis(config.timeout_ms);
    let slots: Vec<Mutex<Option<anyhow::Result<CellRecord>>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(mix, regime, seed, protocol)) = cells.get(i) else { break };
                let mut spec = desk::scenario(mix, regime, config.full);
                if let Some(d) = config.duration {
                    spec = spec.with_duration(d);
                }
                let result = run_protocol(&spec, protocol, seed, model, &config.predictor, timeout).map(|out| {
                    let connectivity = write_connectivity(&out.contact_log);
                    CellRecord {
                        protocol,
                        scenario: spec.scenario_id(),
                        regime,
                        seed,
                        metrics: RunMetrics::from_output(&out),
                        gate: out.stats.gate,
                        contact_events: out.contact_log.len(),
                        contact_digest: sha256_hex(connectivity.as_bytes()),
                    }
                });
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    let records = slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every cell ran"))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let aggregates = aggregate(&records);
    Ok(SweepResult { config: config.clone(), records, aggregates })
}

pub const CELLS_DIR: &str = "cells";

/// Per-cell metric files plus summary tables, CSV and plain text.
pub fn write_sweep(result: &SweepResult, dir: &Path) -> anyhow::Result<()> {
    let cells = dir.join(CELLS_DIR);
    std::fs::create_dir_all(&cells).with_context(|| format!("creating {}", cells.display()))?;
    for r in &result.records {
        std::fs::write(cells.join(r.file_name()), serde_json::to_string_pretty(r)?)?;
    }
    std::fs::write(dir.join("records.csv"), crate::tables::records_csv(&result.records))?;
    write_summaries(&result.aggregates, dir)
}

pub fn write_summaries(aggregates: &[Aggregate], dir: &Path) -> anyhow::Result<()> {
    let mut text = String::new();
    for regime in [Regime::Weekday, Regime::Holiday] {
        let mut scenarios: Vec<&str> =
            aggregates.iter().filter(|a| a.regime == regime).map(|a| a.scenario.as_str()).collect();
        scenarios.sort_by_key(|s| (*s != POOLED, s.to_string()));
        scenarios.dedup();
        for scenario in scenarios {
            let rows: Vec<&Aggregate> =
                aggregates.iter().filter(|a| a.regime == regime && a.scenario == scenario).collect();
            let stem = format!("summary_{}_{}", regime.as_str(), scenario);
            std::fs::write(dir.join(format!("{stem}.csv")), crate::tables::summary_csv(&rows))?;
            text.push_str(&crate::tables::summary_text(regime, scenario, &rows));
            text.push('\n');
        }
    }
    std::fs::write(dir.join("summary.txt"), &text)?;
    Ok(())
}

/// Reads the per-cell files of a sweep directory back.
pub fn load_records(dir: &Path) -> anyhow::Result<Vec<CellRecord>> {
    let cells = dir.join(CELLS_DIR);
    let mut paths: Vec<_> = std::fs::read_dir(&cells)
        .with_context(|| format!("reading {}", cells.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let m = MeanStd::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(m.mean, 5.0);
        assert!((m.std - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(MeanStd::of(&[3.0]).unwrap().std, 0.0);
        assert!(MeanStd::of(&[]).is_none());
    }
}
