use serde::{Deserialize, Serialize};

/// Held-out classification quality. Ratios that divide by zero are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Undefined when only one class is present.
    pub auc: Option<f64>,
    /// Mean wall-clock seconds per prediction.
    pub inference_seconds: f64,
}

impl EvalReport {
    /// One row shaped like a classifier comparison table.
    pub fn table_row(&self, name: &str) -> String {
        let f = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
        format!(
            "{name:<6} {:>6.3} {:>6} {:>6} {:>6} {:>6} {:>10.6}",
            self.accuracy,
            f(self.precision),
            f(self.recall),
            f(self.f1),
            f(self.auc),
            self.inference_seconds
        )
    }

    pub fn table_header() -> String {
        format!("{:<6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>10}", "Model", "Acc", "Prec", "Rec", "F1", "AUC", "Infer(s)")
    }
}

/// AUC as the Mann-Whitney rank statistic with average ranks for ties.
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Option<f64> {
    assert_eq!(y_true.len(), scores.len());
    let pos = y_true.iter().filter(|&&y| y == 1).count();
    let neg = y_true.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if y_true[k] == 1 {
                rank_sum_pos += avg;
            }
        }
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn eval_metrics(y_true: &[u8], y_prob: &[f64], threshold: f64, inference_seconds: f64) -> EvalReport {
    assert_eq!(y_true.len(), y_prob.len(), "label and probability counts differ");
    let (mut tp, mut fp, mut tn, mut fne) = (0usize, 0usize, 0usize, 0usize);
    for (&y, &p) in y_true.iter().zip(y_prob) {
        match (y == 1, p >= threshold) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fne += 1,
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fne);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    EvalReport {
        samples: y_true.len(),
        accuracy: ratio(tp + tn, y_true.len()).unwrap_or(0.0),
        precision,
        recall,
        f1,
        auc: roc_auc(y_true, y_prob),
        inference_seconds,
    }
}
