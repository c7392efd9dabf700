use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;

use super::{BatchTargets, ForwardCache, Gradients, Head, Mlp};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Seeds the per-epoch shuffling stream.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 40,
            l2: 0.01,
            epochs: 1000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("lr", "must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be >= 1"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::invalid("l2", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("adam", "moment decay rates must be in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("adam_eps", "must be > 0"));
        }
        Ok(())
    }
}

/// Adam moment estimates, shaped like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Gradients,
    pub second: Gradients,
    pub step: u64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        Self { first: Gradients::zeros_like(net), second: Gradients::zeros_like(net), step: 0 }
    }

    /// One bias-corrected Adam update.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients, config: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (config.beta1, config.beta2);
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(b1, t as f64);
        let c2 = 1.0 - libm::pow(b2, t as f64);
        let lr = config.learning_rate;
        let eps = config.epsilon;
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (libm::sqrt(v_hat) + eps);
            }
        };
        for (l, layer) in net.layers_mut().iter_mut().enumerate() {
            let (m, v, g) = (&mut self.first.layers[l], &mut self.second.layers[l], &grads.layers[l]);
            update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights);
            update(&mut layer.biases, &g.biases, &mut m.biases, &mut v.biases);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetData {
    /// Row-major `n × outputs`.
    Regression(Vec<f64>),
    /// Zero-based class index per sample.
    Classes(Vec<usize>),
}

/// Normalized inputs and their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    /// Row-major `n × features`.
    pub inputs: Vec<f64>,
    pub features: usize,
    pub targets: TargetData,
    /// Squared-error weight per regression output; empty for plain MSE.
    pub output_weights: Vec<f64>,
}

impl TrainingData {
    pub fn len(&self) -> usize {
        if self.features == 0 {
            0
        } else {
            self.inputs.len() / self.features
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn gather(&self, idx: &[usize], inputs: &mut Vec<f64>, reg: &mut Vec<f64>, cls: &mut Vec<usize>) {
        inputs.clear();
        reg.clear();
        cls.clear();
        for &i in idx {
            inputs.extend_from_slice(&self.inputs[i * self.features..(i + 1) * self.features]);
            match &self.targets {
                TargetData::Regression(t) => {
                    let w = t.len() / self.len();
                    reg.extend_from_slice(&t[i * w..(i + 1) * w]);
                }
                TargetData::Classes(c) => cls.push(c[i]),
            }
        }
    }

    fn batch_loss(&self, net: &Mlp, cache: &ForwardCache, reg: &[f64], cls: &[usize]) -> f64 {
        let out = &cache.act[cache.act.len() - 1];
        match net.head() {
            Head::Linear if self.output_weights.is_empty() => super::loss_mse(out, reg),
            Head::Linear => super::loss_weighted_mse(out, reg, &self.output_weights),
            Head::Softmax => super::loss_xent(out, cls),
        }
    }

    fn batch_targets<'a>(&'a self, head: Head, reg: &'a [f64], cls: &'a [usize]) -> BatchTargets<'a> {
        match head {
            Head::Linear if self.output_weights.is_empty() => BatchTargets::Regression(reg),
            Head::Linear => BatchTargets::WeightedRegression { targets: reg, weights: &self.output_weights },
            Head::Softmax => BatchTargets::Classes(cls),
        }
    }

    /// Mean data loss of `net` over the whole set, evaluated in chunks.
    pub fn loss(&self, net: &Mlp) -> f64 {
        let n = self.len();
        if n == 0 {
            return f64::NAN;
        }
        let mut cache = ForwardCache::default();
        let (mut inputs, mut reg, mut cls) = (Vec::new(), Vec::new(), Vec::new());
        let idx: Vec<usize> = (0..n).collect();
        let mut total = 0.0;
        for chunk in idx.chunks(256) {
            self.gather(chunk, &mut inputs, &mut reg, &mut cls);
            net.forward_batch(&inputs, chunk.len(), &mut cache);
            total += chunk.len() as f64 * self.batch_loss(net, &cache, &reg, &cls);
        }
        total / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    /// Mean mini-batch data loss seen during each epoch.
    pub train_loss: Vec<f64>,
    /// Validation data loss after each epoch.
    pub val_loss: Vec<f64>,
    /// Epoch (zero-based) whose parameters were kept.
    pub best_epoch: usize,
}

/// Mini-batch Adam on the data loss plus the L2 weight penalty. The network
/// ends up holding the parameters with the lowest validation loss (the
/// running training loss when `val` is empty).
pub fn train(net: &mut Mlp, train: &TrainingData, val: &TrainingData, config: &TrainConfig) -> Result<TrainHistory> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("train", "training set is empty"));
    }
    if train.features != net.input_len() {
        return Err(Error::DimensionMismatch {
            what: "training feature width",
            expected: net.input_len(),
            found: train.features,
        });
    }
    match (&train.targets, net.head()) {
        (TargetData::Regression(t), Head::Linear) if t.len() == train.len() * net.output_len() => {}
        (TargetData::Classes(c), Head::Softmax)
            if c.len() == train.len() && c.iter().all(|&k| k < net.output_len()) => {}
        _ => return Err(Error::invalid("targets", "targets do not match the network head")),
    }
    if !train.output_weights.is_empty() && train.output_weights.len() != net.output_len() {
        return Err(Error::DimensionMismatch {
            what: "regression output weights",
            expected: net.output_len(),
            found: train.output_weights.len(),
        });
    }

    let mut rng = StreamRng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(net);
    let mut cache = ForwardCache::default();
    let mut grads = Gradients::zeros_like(net);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let (mut inputs, mut reg, mut cls) = (Vec::new(), Vec::new(), Vec::new());
    let mut history = TrainHistory {
        train_loss: Vec::with_capacity(config.epochs),
        val_loss: Vec::with_capacity(config.epochs),
        best_epoch: 0,
    };
    let mut best = (f64::INFINITY, net.clone());

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for idx in order.chunks(config.batch_size) {
            train.gather(idx, &mut inputs, &mut reg, &mut cls);
            net.forward_batch(&inputs, idx.len(), &mut cache);
            let targets = train.batch_targets(net.head(), &reg, &cls);
            let loss = net.backward(&mut cache, targets, config.l2, &mut grads);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += loss * idx.len() as f64;
            adam.step(net, &grads, config);
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = if val.is_empty() { train_loss } else { val.loss(net) };
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        if val_loss < best.0 {
            best = (val_loss, net.clone());
            history.best_epoch = epoch;
        }
    }
    if config.epochs > 0 {
        *net = best.1;
    }
    Ok(history)
}
