//! Self-contained model file: classifier, input standardizer, feature
//! defaults and decision threshold, stored as JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Standardizer, FEATURE_COUNT, FEATURE_NAMES};
use crate::ml::Classifier;
use crate::routing::predictor::DECISION_THRESHOLD;
use crate::routing::{FeatureDefaults, Prediction, Predictor, PredictorError, RelayQuery};

pub const MODEL_FORMAT: &str = "dtnlab-model/1";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read model {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed model file: {0}")]
    Parse(String),
    #[error("unsupported model format `{found}` (expected `{MODEL_FORMAT}`)")]
    Version { found: String },
    #[error("model shape mismatch: {0}")]
    Shape(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub model_version: String,
    pub feature_names: Vec<String>,
    pub classifier: Classifier,
    pub standardizer: Standardizer,
    /// Training medians used when a peer cannot report delivery statistics.
    pub defaults: FeatureDefaults,
    /// Run length the training features were counted over, seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub threshold: f64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

impl ModelArtifact {
    /// Wraps a trained classifier; the version string is derived from the parameters.
    pub fn new(classifier: Classifier, standardizer: Standardizer, defaults: FeatureDefaults, horizon: Option<f64>) -> Self {
        let body = serde_json::to_vec(&classifier).expect("classifier serializes");
        let kind = match classifier.kind() {
            crate::ml::ModelKind::Mlp => "mlp",
            crate::ml::ModelKind::Forest => "rf",
        };
        ModelArtifact {
            format: MODEL_FORMAT.to_string(),
            model_version: format!("{kind}-{:016x}", fnv1a(&body)),
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            classifier,
            standardizer,
            defaults,
            horizon,
            threshold: DECISION_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.format != MODEL_FORMAT {
            return Err(ModelError::Version { found: self.format.clone() });
        }
        if self.feature_names != FEATURE_NAMES {
            return Err(ModelError::Shape(format!("feature list {:?}", self.feature_names)));
        }
        let dim = self.classifier.input_dim();
        if dim != FEATURE_COUNT || self.standardizer.dim() != FEATURE_COUNT || self.standardizer.std.len() != FEATURE_COUNT {
            return Err(ModelError::Shape(format!(
                "classifier takes {dim} inputs and standardizer {}, expected {FEATURE_COUNT}",
                self.standardizer.dim()
            )));
        }
        self.classifier.validate().map_err(|e| ModelError::Shape(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ModelError::Shape(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let model: ModelArtifact = serde_json::from_str(text).map_err(|e| {
            // report a wrong format tag before structural errors
            match serde_json::from_str::<serde_json::Value>(text).ok().and_then(|v| v.get("format").cloned()) {
                Some(serde_json::Value::String(f)) if f != MODEL_FORMAT => ModelError::Version { found: f },
                _ => ModelError::Parse(e.to_string()),
            }
        })?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let io = |e: std::io::Error| ModelError::Io { path: path.display().to_string(), message: e.to_string() };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        std::fs::write(path, self.to_json()).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&text)
    }

    pub fn probability(&self, query: &RelayQuery) -> f64 {
        let x = self.standardizer.transform(&query.to_array());
        self.classifier.predict_proba(&x)
    }

    pub fn predict(&self, query: &RelayQuery) -> Prediction {
        let probability = self.probability(query);
        Prediction { label: u8::from(probability >= self.threshold), probability }
    }
}

/// Calls a loaded model directly, without going over the network.
pub struct InProcessPredictor<'m> {
    pub model: &'m ModelArtifact,
}

impl Predictor for InProcessPredictor<'_> {
    fn predict(&mut self, query: &RelayQuery) -> Result<Prediction, PredictorError> {
        if let Some(field) = query.invalid_field() {
            return Err(PredictorError::Rejected(format!("`{field}` must be finite and non-negative")));
        }
        Ok(self.model.predict(query))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::forest::{train_forest, ForestConfig};
    use crate::ml::mlp::Mlp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn defaults() -> FeatureDefaults {
        FeatureDefaults { avg_hop_count: 2.5, avg_delivery_time: 900.0, as_relay_count: 4.0 }
    }

    fn random_query(rng: &mut impl Rng) -> RelayQuery {
        RelayQuery::from_array(std::array::from_fn(|_| rng.gen_range(0.0..500.0)))
    }

    #[test]
    fn mlp_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(&[7, 16, 8, 1], &mut rng);
        let std = Standardizer { mean: vec![10.0; 7], std: vec![3.0; 7] };
        let model = ModelArtifact::new(Classifier::Mlp(net), std, defaults(), Some(7200.0));
        let back = ModelArtifact::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        for _ in 0..1000 {
            let q = random_query(&mut rng);
            assert_eq!(back.probability(&q).to_bits(), model.probability(&q).to_bits());
        }
    }

    #[test]
    fn forest_round_trip_keeps_thresholds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x: Vec<Vec<f64>> = (0..80).map(|_| (0..7).map(|_| rng.gen::<f64>()).collect()).collect();
        let y: Vec<u8> = x.iter().map(|r| u8::from(r[0] * r[3] > 0.25)).collect();
        let forest = train_forest(&x, &y, &ForestConfig { n_estimators: 5, max_depth: 4, ..Default::default() });
        let model = ModelArtifact::new(Classifier::Forest(forest), Standardizer::identity(7), defaults(), None);
        assert_eq!(ModelArtifact::from_json(&model.to_json()).unwrap(), model);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let model = ModelArtifact::new(Classifier::Mlp(Mlp::zeros(&[7, 3, 1])), Standardizer::identity(7), defaults(), None);
        let text = model.to_json();
        assert!(matches!(ModelArtifact::from_json(&text[..text.len() / 2]), Err(ModelError::Parse(_))));
        let wrong_version = text.replace(MODEL_FORMAT, "dtnlab-model/0");
        assert!(matches!(ModelArtifact::from_json(&wrong_version), Err(ModelError::Version { .. })));
        let narrow = ModelArtifact::new(Classifier::Mlp(Mlp::zeros(&[6, 3, 1])), Standardizer::identity(7), defaults(), None);
        assert!(matches!(ModelArtifact::from_json(&narrow.to_json()), Err(ModelError::Shape(_))));
    }

    #[test]
    fn threshold_is_inclusive() {
        let model = ModelArtifact::new(Classifier::Mlp(Mlp::zeros(&[7, 3, 1])), Standardizer::identity(7), defaults(), None);
        let p = model.predict(&RelayQuery::default());
        assert_eq!((p.label, p.probability), (1, 0.5));
    }
}
