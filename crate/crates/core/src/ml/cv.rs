//! Stratified k-fold grid search.

use std::cmp::Ordering;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ml::eval::{eval_metrics, roc_auc};
use crate::ml::forest::{train_forest, ForestConfig};
use crate::ml::mlp::{train_mlp, TrainConfig};
use crate::ml::{Classifier, MlError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HyperParams {
    Mlp { learning_rate: f64, batch_size: usize },
    Forest { n_estimators: usize, max_depth: usize },
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperParams::Mlp { learning_rate, batch_size } => write!(f, "lr={learning_rate:e} batch={batch_size}"),
            HyperParams::Forest { n_estimators, max_depth } => write!(f, "trees={n_estimators} depth={max_depth}"),
        }
    }
}

impl HyperParams {
    fn key(&self) -> (f64, f64) {
        match self {
            HyperParams::Mlp { learning_rate, batch_size } => (*learning_rate, *batch_size as f64),
            HyperParams::Forest { n_estimators, max_depth } => (*n_estimators as f64, *max_depth as f64),
        }
    }

    pub fn mlp_grid() -> Vec<HyperParams> {
        let mut g = Vec::new();
        for learning_rate in [1e-2, 1e-3, 1e-4] {
            for batch_size in [16, 32, 64] {
                g.push(HyperParams::Mlp { learning_rate, batch_size });
            }
        }
        g
    }

    pub fn forest_grid() -> Vec<HyperParams> {
        let mut g = Vec::new();
        for n_estimators in [50, 100, 200] {
            for max_depth in [5, 10, 20] {
                g.push(HyperParams::Forest { n_estimators, max_depth });
            }
        }
        g
    }
}

/// Base settings the grid parameters are layered onto.
#[derive(Clone, Debug, Default)]
pub struct BaseConfig {
    pub mlp: TrainConfig,
    pub forest: ForestConfig,
}

pub fn fit(params: &HyperParams, x: &[Vec<f64>], y: &[u8], base: &BaseConfig, seed: u64) -> Result<Classifier, MlError> {
    match params {
        HyperParams::Mlp { learning_rate, batch_size } => {
            let cfg = TrainConfig { learning_rate: *learning_rate, batch_size: *batch_size, seed, ..base.mlp.clone() };
            Ok(Classifier::Mlp(train_mlp(x, y, None, &cfg)?.0))
        }
        HyperParams::Forest { n_estimators, max_depth } => {
            let cfg = ForestConfig { n_estimators: *n_estimators, max_depth: *max_depth, seed, ..base.forest.clone() };
            Ok(Classifier::Forest(train_forest(x, y, &cfg)))
        }
    }
}

/// Splits row indices into `k` label-stratified folds.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(k >= 2, "need at least two folds");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    folds
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub params: HyperParams,
    pub fold_f1: Vec<f64>,
    pub fold_auc: Vec<Option<f64>>,
    pub mean_f1: f64,
    /// Mean over folds where AUC is defined.
    pub mean_auc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct CvResult {
    pub cells: Vec<CvCell>,
    pub best: usize,
    pub warnings: Vec<String>,
    /// Best cell refit on all rows.
    pub model: Classifier,
}

impl CvResult {
    pub fn best_cell(&self) -> &CvCell {
        &self.cells[self.best]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("params,mean_f1,mean_auc,fold_f1\n");
        for c in &self.cells {
            let folds: Vec<String> = c.fold_f1.iter().map(|v| format!("{v:.6}")).collect();
            out.push_str(&format!(
                "\"{}\",{:.6},{},{}\n",
                c.params,
                c.mean_f1,
                c.mean_auc.map_or(String::new(), |v| format!("{v:.6}")),
                folds.join(";")
            ));
        }
        out
    }
}

fn better(a: &CvCell, b: &CvCell) -> bool {
    let by_f1 = a.mean_f1.total_cmp(&b.mean_f1);
    let auc = |c: &CvCell| c.mean_auc.unwrap_or(f64::NEG_INFINITY);
    let by_auc = auc(a).total_cmp(&auc(b));
    // lower parameter tuple wins the final tie
    let by_params = b.params.key().partial_cmp(&a.params.key()).unwrap_or(Ordering::Equal);
    by_f1.then(by_auc).then(by_params) == Ordering::Greater
}

/// Scores every grid cell by mean validation F1 over stratified folds and
/// refits the best (ties: higher AUC, then smaller parameters) on all rows.
/// Cell `c`, fold `f` trains with seed `seed + 1000·c + f`.
pub fn grid_search_cv(
    grid: &[HyperParams],
    x: &[Vec<f64>],
    y: &[u8],
    k: usize,
    seed: u64,
    base: &BaseConfig,
) -> Result<CvResult, MlError> {
    if grid.is_empty() {
        return Err(MlError::Config("empty parameter grid".into()));
    }
    if k < 2 || k > x.len() {
        return Err(MlError::Config(format!("cannot make {k} folds from {} rows", x.len())));
    }
    let folds = stratified_kfold(y, k, seed);
    let mut cells = Vec::with_capacity(grid.len());
    let mut warnings = Vec::new();
    for (c, params) in grid.iter().enumerate() {
        let (mut fold_f1, mut fold_auc) = (Vec::new(), Vec::new());
        for (f, held) in folds.iter().enumerate() {
            let mut is_held = vec![false; x.len()];
            held.iter().for_each(|&i| is_held[i] = true);
            let train: Vec<usize> = (0..x.len()).filter(|&i| !is_held[i]).collect();
            let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
            let ty: Vec<u8> = train.iter().map(|&i| y[i]).collect();
            let model = fit(params, &tx, &ty, base, seed + 1000 * c as u64 + f as u64)?;
            let vy: Vec<u8> = held.iter().map(|&i| y[i]).collect();
            let probs: Vec<f64> = held.iter().map(|&i| model.predict_proba(&x[i])).collect();
            let report = eval_metrics(&vy, &probs, 0.5, 0.0);
            fold_f1.push(report.f1.unwrap_or(0.0));
            let auc = roc_auc(&vy, &probs);
            if auc.is_none() {
                warnings.push(format!("{params}: fold {f} has a single class, AUC excluded"));
            }
            fold_auc.push(auc);
        }
        let mean_f1 = fold_f1.iter().sum::<f64>() / k as f64;
        let defined: Vec<f64> = fold_auc.iter().flatten().copied().collect();
        let mean_auc = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        cells.push(CvCell { params: params.clone(), fold_f1, fold_auc, mean_f1, mean_auc });
    }
    let mut best = 0;
    for i in 1..cells.len() {
        if better(&cells[i], &cells[best]) {
            best = i;
        }
    }
    let model = fit(&cells[best].params, x, y, base, seed)?;
    Ok(CvResult { cells, best, warnings, model })
}
