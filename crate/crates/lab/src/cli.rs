use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dtnlab_core::features::{Dataset, DatasetOptions};
use dtnlab_core::metrics::RunMetrics;
use dtnlab_core::ml::{EvalReport, ModelArtifact, ModelKind};
use dtnlab_core::mobility::Regime;
use dtnlab_core::{RouterKind, ScenarioSpec};

use crate::desk;
use crate::manifest::Manifest;
use crate::pipeline::{self, PredictorChoice};
use crate::sweep::{self, SweepConfig};

#[derive(Debug, Parser)]
#[command(name = "dtnlab", version, about = "Delay-tolerant routing experiments with a learned relay gate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write its reports
    Simulate(SimulateArgs),
    /// Build a labeled dataset from run directories
    Extract(ExtractArgs),
    /// Train a classifier with default hyperparameters
    Train(TrainArgs),
    /// Grid-search hyperparameters with k-fold CV, then train
    Tune(TuneArgs),
    /// Serve a model over HTTP
    Serve(ServeArgs),
    /// Compare routers over scenarios, regimes and seeds
    Sweep(SweepArgs),
    /// Rebuild the summary tables of a sweep directory
    Report(ReportArgs),
    /// Training runs, dataset, model and sweep in one go
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file (TOML); overrides --scenario and --regime
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "P20_C20")]
    pub scenario: String,
    #[arg(long, default_value = "weekday")]
    pub regime: Regime,
    /// Full-size 12 h profile instead of the desk profile
    #[arg(long)]
    pub full: bool,
    /// Run length in seconds, overriding the profile
    #[arg(long)]
    pub duration: Option<f64>,
}

impl ScenarioArgs {
    fn spec(&self) -> anyhow::Result<ScenarioSpec> {
        match &self.config {
            Some(path) => Ok(ScenarioSpec::load(path)?),
            None => {
                let spec = desk::scenario(desk::parse_mix(&self.scenario)?, self.regime, self.full);
                Ok(match self.duration {
                    Some(d) => spec.with_duration(d),
                    None => spec,
                })
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct PredictorArgs {
    /// Model file, required for the ml router
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// `inprocess` or `http:<host:port>`
    #[arg(long, default_value = "inprocess")]
    pub predictor: PredictorChoice,
    /// Per-request timeout for the HTTP predictor
    #[arg(long, default_value_t = 50)]
    pub timeout_ms: u64,
}

impl PredictorArgs {
    fn load_model(&self) -> anyhow::Result<Option<ModelArtifact>> {
        self.model.as_deref().map(|p| load_model(p)).transpose()
    }
}

fn load_model(path: &Path) -> anyhow::Result<ModelArtifact> {
    ModelArtifact::load(path).with_context(|| format!("loading model {}", path.display()))
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// epidemic, spray, random or ml
    #[arg(long, default_value = "spray")]
    pub router: RouterKind,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub predictor: PredictorArgs,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Run directories, one scenario each
    #[arg(long, num_args = 1.., required = true)]
    pub logs: Vec<PathBuf>,
    /// Dataset table (CSV); metadata goes beside it
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub split_seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// mlp or rf
    #[arg(long, default_value = "mlp")]
    pub model_kind: ModelKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated mixes, e.g. P20_C20,P28_C28
    #[arg(long, value_delimiter = ',', default_value = "P20_C20,P28_C28")]
    pub scenarios: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "weekday,holiday")]
    pub regimes: Vec<Regime>,
    #[arg(long, value_delimiter = ',', default_value = "spray,ml,random")]
    pub protocols: Vec<RouterKind>,
    /// Number of seeds, run as 1..=n
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[arg(long)]
    pub full: bool,
    /// Run length in seconds, overriding the profile
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub predictor: PredictorArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Sweep output directory
    #[arg(long)]
    pub run: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Seeds per training scenario
    #[arg(long, default_value_t = 1)]
    pub train_seeds: u64,
    /// Seeds per sweep cell
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[arg(long, value_delimiter = ',', default_value = "P20_C20,P28_C28")]
    pub scenarios: Vec<String>,
    #[arg(long)]
    pub full: bool,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Extract(a) => extract(&a),
        Command::Train(a) => train(&a, None),
        Command::Tune(a) => train(&a.train, Some(a.folds)),
        Command::Serve(a) => {
            let model = load_model(&a.model)?;
            println!("serving {} on http://{}", model.model_version, a.bind);
            dtnlab_serve::serve(model, &a.bind).with_context(|| format!("serving on {}", a.bind))
        }
        Command::Sweep(a) => sweep_cmd(&a),
        Command::Report(a) => report(&a),
        Command::Pipeline(a) => pipeline_cmd(&a),
    }
}

fn print_metrics(label: &str, m: &RunMetrics) {
    let f = |v: Option<f64>, d: usize| v.map_or("n/a".to_string(), |x| format!("{x:.d$}"));
    println!(
        "{label}: created {} delivered {} ({:.3}) overhead {} latency {} s buffertime {} s",
        m.created,
        m.delivered,
        m.delivery_probability,
        f(m.overhead_ratio, 3),
        f(m.latency_avg, 1),
        f(m.buffertime_avg, 1)
    );
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    scenario: &'a ScenarioSpec,
    router: RouterKind,
    seed: u64,
    model_version: Option<String>,
    predictor: &'a PredictorChoice,
}

fn simulate(a: &SimulateArgs) -> anyhow::Result<()> {
    let spec = a.scenario.spec()?;
    let model = a.predictor.load_model()?;
    let timeout = Duration::from_millis(a.predictor.timeout_ms);
    let out = pipeline::run_protocol(&spec, a.router, a.seed, model.as_ref(), &a.predictor.predictor, timeout)?;
    let metrics = pipeline::write_run(&out, &spec, &a.out)?;
    let config = SimulateConfig {
        scenario: &spec,
        router: a.router,
        seed: a.seed,
        model_version: model.map(|m| m.model_version),
        predictor: &a.predictor.predictor,
    };
    Manifest::new("simulate", &config, vec![a.seed]).write(&a.out)?;
    print_metrics(&format!("{} {} {} seed {}", spec.scenario_id(), spec.regime.as_str(), a.router, a.seed), &metrics);
    if a.router == RouterKind::MlGated {
        let g = out.stats.gate;
        println!("gate: {} decisions, {} relayed, {} predictor calls, {} fallbacks", g.decisions, g.relayed, g.predictor_calls, g.fallbacks);
    }
    Ok(())
}

fn print_dataset(ds: &Dataset) {
    for id in &ds.meta.scenarios {
        let rows: Vec<_> = ds.rows.iter().filter(|r| &r.scenario_id == id).collect();
        let pos = rows.iter().filter(|r| r.label == 1).count();
        println!("{id}: {} rows, {} high / {} low", rows.len(), pos, rows.len() - pos);
    }
    for w in &ds.meta.warnings {
        println!("warning: {w}");
    }
    println!("{} rows total, {} train / {} test", ds.rows.len(), ds.train.len(), ds.test.len());
}

#[derive(Serialize)]
struct ExtractConfig<'a> {
    logs: &'a [PathBuf],
    split_seed: u64,
    test_fraction: f64,
}

fn extract(a: &ExtractArgs) -> anyhow::Result<()> {
    let loaded = a
        .logs
        .iter()
        .map(|d| pipeline::load_logs(d, &pipeline::dir_label(d)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let logs: Vec<_> = loaded.iter().map(|l| l.as_scenario()).collect();
    let options = DatasetOptions { split_seed: a.split_seed, test_fraction: a.test_fraction, ..Default::default() };
    let ds = dtnlab_core::features::assemble_dataset(&logs, &options)?;
    ds.save(&a.out)?;
    let config = ExtractConfig { logs: &a.logs, split_seed: a.split_seed, test_fraction: a.test_fraction };
    Manifest::new("extract", &config, vec![a.split_seed]).write_beside(&a.out)?;
    print_dataset(&ds);
    Ok(())
}

fn print_report(name: &str, r: &EvalReport) {
    println!("{}", EvalReport::table_header());
    println!("{}", r.table_row(name));
}

#[derive(Serialize)]
struct TrainConfigRecord<'a> {
    dataset: &'a Path,
    model_kind: ModelKind,
    seed: u64,
    folds: Option<usize>,
}

fn train(a: &TrainArgs, folds: Option<usize>) -> anyhow::Result<()> {
    let ds = Dataset::load(&a.dataset)?;
    let outcome = pipeline::train(&ds, a.model_kind, a.seed, folds)?;
    outcome.model.save(&a.out)?;
    let mut eval_path = a.out.clone().into_os_string();
    eval_path.push(".eval.json");
    std::fs::write(&eval_path, serde_json::to_string_pretty(&outcome.report)?)?;
    if let Some(cv) = &outcome.cv {
        let mut cv_path = a.out.clone().into_os_string();
        cv_path.push(".cv.csv");
        std::fs::write(&cv_path, cv.to_csv())?;
        println!("{}", cv.to_csv().trim_end());
        println!("best: {}", cv.best_cell().params);
        for w in &cv.warnings {
            println!("warning: {w}");
        }
    }
    let command = if folds.is_some() { "tune" } else { "train" };
    let config = TrainConfigRecord { dataset: &a.dataset, model_kind: a.model_kind, seed: a.seed, folds };
    Manifest::new(command, &config, vec![a.seed]).write_beside(&a.out)?;
    let name = match a.model_kind {
        ModelKind::Mlp => "MLP",
        ModelKind::Forest => "RF",
    };
    print_report(name, &outcome.report);
    println!("model {} written to {}", outcome.model.model_version, a.out.display());
    Ok(())
}

fn sweep_config(scenarios: &[String], regimes: Vec<Regime>, protocols: Vec<RouterKind>, seeds: u64, full: bool, p: &PredictorArgs) -> anyhow::Result<SweepConfig> {
    if seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    Ok(SweepConfig {
        mixes: scenarios.iter().map(|s| desk::parse_mix(s)).collect::<anyhow::Result<_>>()?,
        regimes,
        protocols,
        seeds: (1..=seeds).collect(),
        full,
        duration: None,
        predictor: p.predictor.clone(),
        timeout_ms: p.timeout_ms,
    })
}

fn run_and_write_sweep(config: &SweepConfig, model: Option<&ModelArtifact>, out: &Path) -> anyhow::Result<()> {
    println!("running {} cells", config.cell_count());
    let result = sweep::run_sweep(config, model)?;
    sweep::write_sweep(&result, out)?;
    let mut record = serde_json::to_value(config)?;
    record["model_version"] = serde_json::json!(model.map(|m| m.model_version.clone()));
    Manifest::new("sweep", &record, config.seeds.clone()).write(out)?;
    for v in result.fairness_violations() {
        println!("warning: contact log differs: {v}");
    }
    print!("{}", std::fs::read_to_string(out.join("summary.txt"))?);
    Ok(())
}

fn sweep_cmd(a: &SweepArgs) -> anyhow::Result<()> {
    let mut config = sweep_config(&a.scenarios, a.regimes.clone(), a.protocols.clone(), a.seeds, a.full, &a.predictor)?;
    config.duration = a.duration;
    let model = a.predictor.load_model()?;
    if config.protocols.contains(&RouterKind::MlGated) && model.is_none() {
        bail!("protocol ml needs --model");
    }
    run_and_write_sweep(&config, model.as_ref(), &a.out)
}

fn report(a: &ReportArgs) -> anyhow::Result<()> {
    let records = sweep::load_records(&a.run)?;
    if records.is_empty() {
        bail!("no cell files under {}", a.run.join(sweep::CELLS_DIR).display());
    }
    let aggregates = sweep::aggregate(&records);
    sweep::write_summaries(&aggregates, &a.run)?;
    print!("{}", std::fs::read_to_string(a.run.join("summary.txt"))?);
    Ok(())
}

fn pipeline_cmd(a: &PipelineArgs) -> anyhow::Result<()> {
    let mut specs = Vec::new();
    for mix in desk::mixes(a.full) {
        for regime in [Regime::Weekday, Regime::Holiday] {
            specs.push(desk::scenario(mix, regime, a.full));
        }
    }
    let train_seeds: Vec<u64> = (101..101 + a.train_seeds).collect();
    println!("training runs: {} scenarios x {} seeds", specs.len(), train_seeds.len());
    let runs = pipeline::training_runs(&specs, &train_seeds)?;
    let logs_root = a.out.join("training");
    for ((label, out), spec) in runs.iter().zip(specs.iter().flat_map(|s| train_seeds.iter().map(move |_| s))) {
        pipeline::write_run(out, spec, &logs_root.join(label))?;
    }
    let ds = pipeline::dataset_from_runs(&runs, &DatasetOptions::default())?;
    let ds_path = a.out.join("dataset.csv");
    ds.save(&ds_path)?;
    print_dataset(&ds);
    let outcome = pipeline::train(&ds, ModelKind::Mlp, 1, None)?;
    let model_path = a.out.join("model.json");
    outcome.model.save(&model_path)?;
    print_report("MLP", &outcome.report);
    let predictor = PredictorArgs { model: Some(model_path), predictor: PredictorChoice::InProcess, timeout_ms: 50 };
    let protocols = vec![RouterKind::SprayAndWait, RouterKind::MlGated, RouterKind::Random];
    let config = sweep_config(&a.scenarios, vec![Regime::Weekday, Regime::Holiday], protocols, a.seeds, a.full, &predictor)?;
    run_and_write_sweep(&config, Some(&outcome.model), &a.out.join("sweep"))
}
