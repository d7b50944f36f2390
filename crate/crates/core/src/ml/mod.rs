//! Relay classifiers, evaluation and the model file.

pub mod cv;
pub mod eval;
pub mod forest;
pub mod mlp;
pub mod model;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cv::{grid_search_cv, stratified_kfold, BaseConfig, CvResult, HyperParams};
pub use eval::{eval_metrics, roc_auc, EvalReport};
pub use forest::{train_forest, Forest, ForestConfig};
pub use mlp::{train_mlp, History, Mlp, TrainConfig};
pub use model::{InProcessPredictor, ModelArtifact, ModelError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MlError {
    #[error("expected {expected} input features, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("loss became non-finite at epoch {epoch} (learning rate {learning_rate:e})")]
    Diverged { epoch: usize, learning_rate: f64 },
    #[error("bad model shape: {0}")]
    Shape(String),
    #[error("{0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mlp,
    Forest,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mlp" => Ok(ModelKind::Mlp),
            "rf" | "forest" => Ok(ModelKind::Forest),
            "svm" => Err("svm is not supported: only the mlp and rf classifiers are implemented".into()),
            other => Err(format!("unknown model kind `{other}` (expected mlp or rf)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    Mlp(Mlp),
    Forest(Forest),
}

impl Classifier {
    pub fn kind(&self) -> ModelKind {
        match self {
            Classifier::Mlp(_) => ModelKind::Mlp,
            Classifier::Forest(_) => ModelKind::Forest,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Classifier::Mlp(m) => m.input_dim(),
            Classifier::Forest(f) => f.n_features,
        }
    }

    /// Probability of label 1 for a standardized input of the right length.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        match self {
            Classifier::Mlp(m) => m.forward(x).expect("input length checked by caller"),
            Classifier::Forest(f) => f.predict_proba(x),
        }
    }

    pub fn validate(&self) -> Result<(), MlError> {
        match self {
            Classifier::Mlp(m) => m.validate(),
            Classifier::Forest(f) => f.validate().map_err(MlError::Shape),
        }
    }
}
