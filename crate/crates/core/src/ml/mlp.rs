//! Fully connected network with ReLU hidden layers and a logistic output,
//! trained on binary cross-entropy with Adam.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::stratified_split;
use crate::ml::MlError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major, `outputs × inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.biases[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>());
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Gradients laid out like the parameters of an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit, computed without forming the probability.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        Mlp { layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect() }
    }

    /// He-normal weights (σ = √(2 / fan_in)), zero biases.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(sizes);
        for layer in &mut net.layers {
            let std = (2.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = std * standard_normal(rng);
            }
        }
        net
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    /// Checks that layer sizes chain, that the output is a single unit and
    /// that every parameter is finite.
    pub fn validate(&self) -> Result<(), MlError> {
        if self.layers.is_empty() {
            return Err(MlError::Shape("network has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(MlError::Shape(format!("layer {i} parameter count does not match {}x{}", l.outputs, l.inputs)));
            }
            if i > 0 && self.layers[i - 1].outputs != l.inputs {
                return Err(MlError::Shape(format!("layer {i} expects {} inputs, previous gives {}", l.inputs, self.layers[i - 1].outputs)));
            }
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(MlError::Shape(format!("layer {i} has non-finite parameters")));
            }
        }
        if self.layers.last().map(|l| l.outputs) != Some(1) {
            return Err(MlError::Shape("output layer must have one unit".into()));
        }
        Ok(())
    }

    fn logit(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Probability of the positive class, kept strictly inside (0, 1).
    pub fn forward(&self, x: &[f64]) -> Result<f64, MlError> {
        if x.len() != self.input_dim() {
            return Err(MlError::Dimension { expected: self.input_dim(), found: x.len() });
        }
        Ok(sigmoid(self.logit(x)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    }

    /// Mean binary cross-entropy over the batch.
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[u8]) -> f64 {
        let total: f64 = xs.iter().zip(ys).map(|(x, &y)| bce_from_logit(self.logit(x), f64::from(y))).sum();
        total / xs.len().max(1) as f64
    }

    /// Analytic gradients of the mean binary cross-entropy, and the loss itself.
    pub fn gradients(&self, xs: &[Vec<f64>], ys: &[u8]) -> (Gradients, f64) {
        let mut grads = Gradients { layers: self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect() };
        let n = xs.len().max(1) as f64;
        let last = self.layers.len() - 1;
        let mut loss = 0.0;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        for (x, &y) in xs.iter().zip(ys) {
            acts.clear();
            acts.push(x.clone());
            for (i, layer) in self.layers.iter().enumerate() {
                let mut out = Vec::with_capacity(layer.outputs);
                layer.apply(&acts[i], &mut out);
                if i < last {
                    out.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                acts.push(out);
            }
            let z = acts[last + 1][0];
            let y = f64::from(y);
            loss += bce_from_logit(z, y);
            let mut delta = vec![(sigmoid(z) - y) / n];
            for i in (0..=last).rev() {
                let layer = &self.layers[i];
                let g = &mut grads.layers[i];
                let input = &acts[i];
                for o in 0..layer.outputs {
                    g.biases[o] += delta[o];
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, a) in row.iter_mut().zip(input) {
                        *gw += delta[o] * a;
                    }
                }
                if i > 0 {
                    let mut prev = vec![0.0; layer.inputs];
                    for o in 0..layer.outputs {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += delta[o] * w;
                        }
                    }
                    for (p, a) in prev.iter_mut().zip(input) {
                        if *a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        (grads, loss / n)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Epochs without improvement before halving the learning rate.
    pub lr_patience: usize,
    pub lr_factor: f64,
    /// Share of the training rows held out for validation when none is given.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![128, 64],
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 200,
            patience: 10,
            lr_patience: 5,
            lr_factor: 0.5,
            validation_fraction: 0.1,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MlError> {
        let ok = self.learning_rate > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0
            && self.batch_size > 0
            && self.lr_factor > 0.0
            && self.hidden.iter().all(|&h| h > 0)
            && (0.0..1.0).contains(&self.validation_fraction);
        if ok {
            Ok(())
        } else {
            Err(MlError::Config("training hyperparameters must be positive".into()))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub learning_rate: Vec<f64>,
    /// Index into the per-epoch vectors of the epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, net: &mut Mlp, grads: &Gradients, cfg: &TrainConfig, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        let g = grads.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases));
        for (((p, g), m), v) in net.params_mut().zip(g).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.epsilon);
        }
    }
}

/// Trains a network of shape `[dim, hidden.., 1]`. Without an explicit
/// validation set a stratified share of the training rows is held out. The
/// returned parameters are those of the epoch with the lowest validation loss.
pub fn train_mlp(
    x: &[Vec<f64>],
    y: &[u8],
    validation: Option<(&[Vec<f64>], &[u8])>,
    cfg: &TrainConfig,
) -> Result<(Mlp, History), MlError> {
    cfg.validate()?;
    if x.is_empty() || x.len() != y.len() {
        return Err(MlError::Config(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let dim = x[0].len();
    let mut sizes = vec![dim];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Mlp::new(&sizes, &mut rng);

    let (train_x, train_y, val_x, val_y): (Vec<Vec<f64>>, Vec<u8>, Vec<Vec<f64>>, Vec<u8>) = match validation {
        Some((vx, vy)) => (x.to_vec(), y.to_vec(), vx.to_vec(), vy.to_vec()),
        None => {
            let (tr, va) = stratified_split(y, cfg.validation_fraction, cfg.seed ^ 0x5eed);
            if va.is_empty() || tr.is_empty() {
                (x.to_vec(), y.to_vec(), x.to_vec(), y.to_vec())
            } else {
                let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<u8>) {
                    (idx.iter().map(|&i| x[i].clone()).collect(), idx.iter().map(|&i| y[i]).collect())
                };
                let (a, b) = pick(&tr);
                let (c, d) = pick(&va);
                (a, b, c, d)
            }
        }
    };

    let n_params: usize = net.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum();
    let mut adam = Adam { m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 };
    let mut history = History::default();
    let mut best = (f64::INFINITY, net.clone());
    let mut lr = cfg.learning_rate;
    let (mut stale, mut plateau) = (0usize, 0usize);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut bx = Vec::with_capacity(cfg.batch_size);
    let mut by = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.push(train_x[i].clone());
                by.push(train_y[i]);
            }
            let (grads, _) = net.gradients(&bx, &by);
            adam.step(&mut net, &grads, cfg, lr);
        }
        let train_loss = net.loss(&train_x, &train_y);
        let val_loss = net.loss(&val_x, &val_y);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(MlError::Diverged { epoch, learning_rate: lr });
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        history.learning_rate.push(lr);
        if val_loss < best.0 {
            best = (val_loss, net.clone());
            history.best_epoch = Some(epoch);
            stale = 0;
            plateau = 0;
        } else {
            stale += 1;
            plateau += 1;
            if stale >= cfg.patience {
                break;
            }
            if plateau >= cfg.lr_patience {
                lr *= cfg.lr_factor;
                plateau = 0;
            }
        }
    }
    Ok((best.1, history))
}
