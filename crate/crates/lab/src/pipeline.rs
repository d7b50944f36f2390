//! The stages shared by the CLI and the acceptance suite.

use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use dtnlab_core::features::{assemble_dataset, Dataset, DatasetOptions, ScenarioLogs};
use dtnlab_core::metrics::RunMetrics;
use dtnlab_core::ml::{
    cv::fit, eval_metrics, grid_search_cv, BaseConfig, Classifier, CvResult, EvalReport, HyperParams, ModelArtifact,
    ModelKind, InProcessPredictor, TrainConfig,
};
use dtnlab_core::reports::{parse_connectivity, parse_delivered, ContactEvent, DeliveryRecord, LinkChange};
use dtnlab_core::routing::MlGate;
use dtnlab_core::{NodeId, RouterKind, ScenarioSpec, SimOutput, Simulation};
use dtnlab_serve::HttpPredictor;

pub const SCENARIO_FILE: &str = "scenario.toml";
pub const METRICS_FILE: &str = "metrics.json";

/// Where the gated router gets its predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictorChoice {
    InProcess,
    /// `host:port` of a running service.
    Http(String),
}

impl FromStr for PredictorChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "inprocess" => Ok(PredictorChoice::InProcess),
            _ => match s.strip_prefix("http:") {
                Some(addr) if !addr.is_empty() => Ok(PredictorChoice::Http(addr.trim_start_matches("//").to_string())),
                _ => Err(format!("unknown predictor `{s}` (expected inprocess or http:<host:port>)")),
            },
        }
    }
}

/// Runs one scenario. The gated router needs `model`; its predictor comes
/// from `predictor`.
pub fn run_protocol(
    spec: &ScenarioSpec,
    router: RouterKind,
    seed: u64,
    model: Option<&ModelArtifact>,
    predictor: &PredictorChoice,
    timeout: Duration,
) -> anyhow::Result<SimOutput> {
    if router != RouterKind::MlGated {
        return Ok(Simulation::new(spec, router, seed).run()?);
    }
    let Some(model) = model else {
        bail!("router {} needs a model file (--model)", router.label());
    };
    let (defaults, horizon) = (model.defaults, model.horizon);
    let out = match predictor {
        PredictorChoice::InProcess => {
            let mut p = InProcessPredictor { model };
            Simulation::new(spec, router, seed).ml_gate(MlGate::new(&mut p, defaults, horizon)).run()?
        }
        PredictorChoice::Http(addr) => {
            let mut p = HttpPredictor::new(addr, timeout);
            Simulation::new(spec, router, seed).ml_gate(MlGate::new(&mut p, defaults, horizon)).run()?
        }
    };
    Ok(out)
}

/// Writes the four reports, the scenario and a metrics summary into `dir`.
pub fn write_run(out: &SimOutput, spec: &ScenarioSpec, dir: &Path) -> anyhow::Result<RunMetrics> {
    out.write_reports(dir).with_context(|| format!("writing reports to {}", dir.display()))?;
    std::fs::write(dir.join(SCENARIO_FILE), spec.to_toml_string())?;
    let metrics = RunMetrics::from_output(out);
    let summary = serde_json::json!({
        "scenario_id": out.scenario_id,
        "regime": spec.regime.as_str(),
        "router": out.router.label(),
        "seed": out.seed,
        "metrics": metrics,
        "stats": out.stats,
    });
    std::fs::write(dir.join(METRICS_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(metrics)
}

/// Logs of one run as read back from disk.
pub struct LoadedLogs {
    pub scenario_id: String,
    pub contacts: Vec<ContactEvent>,
    pub deliveries: Vec<DeliveryRecord>,
    pub end_time: f64,
    pub roster: Vec<NodeId>,
}

impl LoadedLogs {
    pub fn as_scenario(&self) -> ScenarioLogs<'_> {
        ScenarioLogs {
            scenario_id: self.scenario_id.clone(),
            contacts: &self.contacts,
            deliveries: &self.deliveries,
            end_time: self.end_time,
            roster: &self.roster,
        }
    }
}

/// Reads a run directory. Without a scenario file the roster is the set of
/// nodes named in the logs and the run is taken to end at the last event.
pub fn load_logs(dir: &Path, label: &str) -> anyhow::Result<LoadedLogs> {
    let read = |name: &str| {
        let path = dir.join(name);
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))
    };
    let contacts = parse_connectivity(&read(SimOutput::CONNECTIVITY_FILE)?)
        .with_context(|| format!("{}/{}", dir.display(), SimOutput::CONNECTIVITY_FILE))?;
    let deliveries = parse_delivered(&read(SimOutput::DELIVERED_FILE)?)
        .with_context(|| format!("{}/{}", dir.display(), SimOutput::DELIVERED_FILE))?;
    let (end_time, roster) = match dir.join(SCENARIO_FILE).exists() {
        true => {
            let spec = ScenarioSpec::load(&dir.join(SCENARIO_FILE))?;
            (spec.duration, spec.node_ids())
        }
        false => {
            let mut nodes: Vec<NodeId> = contacts.iter().flat_map(|e| [e.a, e.b]).collect();
            nodes.extend(deliveries.iter().flat_map(|d| d.path.iter().copied()));
            nodes.sort();
            nodes.dedup();
            let last = contacts.iter().map(|e| e.time).chain(deliveries.iter().map(|d| d.time)).fold(0.0, f64::max);
            (last, nodes)
        }
    };
    Ok(LoadedLogs { scenario_id: label.to_string(), contacts, deliveries, end_time, roster })
}

/// Scenario label for a run directory: the directory name.
pub fn dir_label(dir: &Path) -> String {
    dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Spray-and-wait runs over every (scenario, seed), the logs the dataset is built from.
pub fn training_runs(specs: &[ScenarioSpec], seeds: &[u64]) -> anyhow::Result<Vec<(String, SimOutput)>> {
    let mut runs = Vec::new();
    for spec in specs {
        for &seed in seeds {
            let out = Simulation::new(spec, RouterKind::SprayAndWait, seed).run()?;
            runs.push((format!("{}_{}_s{seed}", spec.scenario_id(), spec.regime.as_str()), out));
        }
    }
    Ok(runs)
}

pub fn dataset_from_runs(runs: &[(String, SimOutput)], options: &DatasetOptions) -> anyhow::Result<Dataset> {
    let logs: Vec<ScenarioLogs<'_>> = runs
        .iter()
        .map(|(label, out)| ScenarioLogs {
            scenario_id: label.clone(),
            contacts: &out.contact_log,
            deliveries: &out.delivery_log,
            end_time: out.duration,
            roster: &out.nodes,
        })
        .collect();
    Ok(assemble_dataset(&logs, options)?)
}

pub fn count_contacts(events: &[ContactEvent]) -> usize {
    events.iter().filter(|e| e.kind == LinkChange::Up).count()
}

pub struct TrainOutcome {
    pub model: ModelArtifact,
    pub report: EvalReport,
    pub cv: Option<CvResult>,
}

fn default_params(kind: ModelKind, base: &BaseConfig) -> HyperParams {
    match kind {
        ModelKind::Mlp => HyperParams::Mlp { learning_rate: base.mlp.learning_rate, batch_size: base.mlp.batch_size },
        ModelKind::Forest => {
            HyperParams::Forest { n_estimators: base.forest.n_estimators, max_depth: base.forest.max_depth }
        }
    }
}

/// Fits on the training split (grid search with `folds`-fold CV when given)
/// and evaluates on the held-out split.
pub fn train(dataset: &Dataset, kind: ModelKind, seed: u64, folds: Option<usize>) -> anyhow::Result<TrainOutcome> {
    let (x, y) = dataset.xy(&dataset.train);
    if x.is_empty() {
        bail!("dataset has no training rows");
    }
    let base = BaseConfig {
        mlp: TrainConfig { seed, ..TrainConfig::default() },
        forest: dtnlab_core::ml::ForestConfig { seed, ..Default::default() },
    };
    let (classifier, cv): (Classifier, Option<CvResult>) = match folds {
        Some(k) => {
            let grid = match kind {
                ModelKind::Mlp => HyperParams::mlp_grid(),
                ModelKind::Forest => HyperParams::forest_grid(),
            };
            let result = grid_search_cv(&grid, &x, &y, k, seed, &base)?;
            (result.model.clone(), Some(result))
        }
        None => (fit(&default_params(kind, &base), &x, &y, &base, seed)?, None),
    };
    let meta = &dataset.meta;
    let model = ModelArtifact::new(classifier, meta.standardizer.clone(), meta.medians, Some(meta.horizon));
    let (tx, ty) = dataset.xy(&dataset.test);
    let start = Instant::now();
    let probs: Vec<f64> = tx.iter().map(|r| model.classifier.predict_proba(r)).collect();
    let per_sample = start.elapsed().as_secs_f64() / tx.len().max(1) as f64;
    let report = eval_metrics(&ty, &probs, model.threshold, per_sample);
    Ok(TrainOutcome { model, report, cv })
}
