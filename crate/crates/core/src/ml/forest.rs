//! Random forest of Gini-split decision trees.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        /// `[P(y = 0), P(y = 1)]`.
        probs: [f64; 2],
    },
    Split {
        feature: usize,
        /// Samples with `x[feature] <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Arena; the root is node 0.
    pub nodes: Vec<TreeNode>,
    /// Weighted impurity decrease accumulated per feature.
    pub impurity_decrease: Vec<f64>,
}

impl Tree {
    pub fn leaf_probs(&self, x: &[f64]) -> [f64; 2] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { probs } => return *probs,
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    /// Candidate features drawn at each split.
    pub max_features: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_estimators: 200, max_depth: 10, max_features: 3, min_samples_leaf: 2, bootstrap: true, seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub n_features: usize,
    pub n_estimators: usize,
    pub max_depth: usize,
    pub trees: Vec<Tree>,
}

fn gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    2.0 * p * (1.0 - p)
}

struct Builder<'d> {
    x: &'d [Vec<f64>],
    y: &'d [u8],
    cfg: &'d ForestConfig,
    total: f64,
    nodes: Vec<TreeNode>,
    decrease: Vec<f64>,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let pos = idx.iter().filter(|&&i| self.y[i] == 1).count() as f64;
        let n = idx.len() as f64;
        self.nodes.push(TreeNode::Leaf { probs: [1.0 - pos / n, pos / n] });
        self.nodes.len() - 1
    }

    /// Best threshold on `feature` by weighted child Gini: (threshold, child impurity).
    fn best_split(&self, idx: &[usize], feature: usize) -> Option<(f64, f64)> {
        let mut sorted: Vec<(f64, u8)> = idx.iter().map(|&i| (self.x[i][feature], self.y[i])).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = sorted.len();
        let total_pos = sorted.iter().filter(|s| s.1 == 1).count() as f64;
        let min_leaf = self.cfg.min_samples_leaf.max(1);
        let mut left_pos = 0.0;
        let mut best: Option<(f64, f64)> = None;
        for k in 1..n {
            left_pos += f64::from(sorted[k - 1].1);
            if sorted[k - 1].0 == sorted[k].0 || k < min_leaf || n - k < min_leaf {
                continue;
            }
            let (nl, nr) = (k as f64, (n - k) as f64);
            let child = (nl * gini(left_pos, nl) + nr * gini(total_pos - left_pos, nr)) / n as f64;
            if best.is_none_or(|(_, b)| child < b) {
                best = Some(((sorted[k - 1].0 + sorted[k].0) / 2.0, child));
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut impl Rng) -> usize {
        let n = idx.len() as f64;
        let pos = idx.iter().filter(|&&i| self.y[i] == 1).count() as f64;
        let parent = gini(pos, n);
        if depth >= self.cfg.max_depth || parent == 0.0 || idx.len() < 2 * self.cfg.min_samples_leaf.max(1) {
            return self.leaf(&idx);
        }
        let n_features = self.x[0].len();
        let k = self.cfg.max_features.clamp(1, n_features);
        let mut best: Option<(usize, f64, f64)> = None;
        for feature in sample(rng, n_features, k).into_iter() {
            if let Some((thr, child)) = self.best_split(&idx, feature) {
                if best.is_none_or(|(_, _, b)| child < b) {
                    best = Some((feature, thr, child));
                }
            }
        }
        let Some((feature, threshold, child)) = best.filter(|(_, _, c)| parent - c > 1e-12) else {
            return self.leaf(&idx);
        };
        self.decrease[feature] += n / self.total * (parent - child);
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x[i][feature] <= threshold);
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { probs: [0.0, 0.0] });
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[at] = TreeNode::Split { feature, threshold, left, right };
        at
    }
}

/// Grows one tree on the given sample indices.
pub fn grow_tree(x: &[Vec<f64>], y: &[u8], idx: Vec<usize>, cfg: &ForestConfig, rng: &mut impl Rng) -> Tree {
    let n_features = x[0].len();
    let mut b = Builder { x, y, cfg, total: idx.len() as f64, nodes: Vec::new(), decrease: vec![0.0; n_features] };
    b.grow(idx, 0, rng);
    Tree { nodes: b.nodes, impurity_decrease: b.decrease }
}

/// Each tree gets its own random stream derived from (seed, tree index).
pub fn train_forest(x: &[Vec<f64>], y: &[u8], cfg: &ForestConfig) -> Forest {
    assert!(!x.is_empty() && x.len() == y.len(), "forest needs labelled rows");
    let n = x.len();
    let trees = (0..cfg.n_estimators)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64);
            let idx: Vec<usize> = if cfg.bootstrap { (0..n).map(|_| rng.gen_range(0..n)).collect() } else { (0..n).collect() };
            grow_tree(x, y, idx, cfg, &mut rng)
        })
        .collect();
    Forest { n_features: x[0].len(), n_estimators: cfg.n_estimators, max_depth: cfg.max_depth, trees }
}

impl Forest {
    /// Mean of the trees' leaf probabilities for class 1.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.leaf_probs(x)[1]).sum::<f64>() / self.trees.len() as f64
    }

    /// Mean per-tree normalized impurity decrease; uniform when no tree split.
    pub fn feature_importance(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for t in &self.trees {
            let total: f64 = t.impurity_decrease.iter().sum();
            if total > 0.0 {
                for (acc, d) in imp.iter_mut().zip(&t.impurity_decrease) {
                    *acc += d / total;
                }
            }
        }
        let sum: f64 = imp.iter().sum();
        if sum > 0.0 {
            imp.iter_mut().for_each(|v| *v /= sum);
        } else {
            imp.iter_mut().for_each(|v| *v = 1.0 / self.n_features as f64);
        }
        imp
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, t) in self.trees.iter().enumerate() {
            if t.nodes.is_empty() {
                return Err(format!("tree {i} is empty"));
            }
            for node in &t.nodes {
                match node {
                    TreeNode::Leaf { probs } if (probs[0] + probs[1] - 1.0).abs() > 1e-9 => {
                        return Err(format!("tree {i} has a leaf whose probabilities do not sum to 1"));
                    }
                    TreeNode::Split { feature, left, right, threshold } => {
                        if *feature >= self.n_features || *left >= t.nodes.len() || *right >= t.nodes.len() || !threshold.is_finite() {
                            return Err(format!("tree {i} has a malformed split"));
                        }
                    }
                    _ => {}
                }
            }
        }
        if self.trees.is_empty() {
            return Err("forest has no trees".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_is_certain() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![f64::from(i), 1.0]).collect();
        let forest = train_forest(&x, &[1; 20], &ForestConfig { n_estimators: 5, ..Default::default() });
        assert!(x.iter().all(|r| forest.predict_proba(r) == 1.0));
    }

    #[test]
    fn stump_finds_exhaustive_optimum() {
        let xs = [0.3, 1.2, 2.2, 2.9, 4.1, 5.0, 5.5, 6.7, 7.7, 8.0];
        let ys = [0u8, 0, 1, 0, 0, 1, 1, 1, 0, 1];
        let x: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
        let cfg = ForestConfig { n_estimators: 1, max_depth: 1, bootstrap: false, min_samples_leaf: 1, ..Default::default() };
        let forest = train_forest(&x, &ys, &cfg);
        let TreeNode::Split { threshold, .. } = forest.trees[0].nodes[0] else { panic!("expected a split") };
        // independent scan over all midpoints
        let mut best = (f64::INFINITY, 0.0);
        for k in 1..xs.len() {
            let thr = (xs[k - 1] + xs[k]) / 2.0;
            let (l, r): (Vec<u8>, Vec<u8>) = ys.iter().zip(&xs).fold((vec![], vec![]), |(mut l, mut r), (&y, &x)| {
                if x <= thr { l.push(y) } else { r.push(y) }
                (l, r)
            });
            let g = |v: &[u8]| {
                let p = v.iter().filter(|&&y| y == 1).count() as f64 / v.len() as f64;
                1.0 - p * p - (1.0 - p) * (1.0 - p)
            };
            let w = (l.len() as f64 * g(&l) + r.len() as f64 * g(&r)) / xs.len() as f64;
            if w < best.0 {
                best = (w, thr);
            }
        }
        assert_eq!(threshold, best.1);
    }

    #[test]
    fn single_cause_dominates_importance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<Vec<f64>> = (0..400).map(|_| (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<u8> = x.iter().map(|r| u8::from(r[0] > 0.1)).collect();
        let forest = train_forest(&x, &y, &ForestConfig { n_estimators: 50, max_depth: 5, ..Default::default() });
        let imp = forest.feature_importance();
        assert!(imp[0] > 0.8, "{imp:?}");
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(forest.trees.iter().all(|t| t.depth() <= 5));
        forest.validate().unwrap();
    }

    #[test]
    fn forest_probability_is_tree_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<Vec<f64>> = (0..60).map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let y: Vec<u8> = x.iter().map(|r| u8::from(r[1] + r[2] > 1.0)).collect();
        let forest = train_forest(&x, &y, &ForestConfig { n_estimators: 4, max_depth: 3, ..Default::default() });
        for r in &x {
            let manual: f64 = forest.trees.iter().map(|t| t.leaf_probs(r)[1]).sum::<f64>() / 4.0;
            assert_eq!(forest.predict_proba(r), manual);
        }
    }
}
