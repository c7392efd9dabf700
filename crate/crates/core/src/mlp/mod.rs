//! Fully connected network with ELU hidden units and either a linear
//! (regression) or softmax (classification) output head.
//!
//! Layer `l` maps `N_u^(l-1)` inputs to `N_u^(l)` outputs with a weight
//! matrix stored row-major as `inputs × outputs`, so a batch forward pass is
//! `Z = A · W + b` on row-major `batch × width` activations.

mod gemm;
mod model;
mod train;

pub use model::{predict_coordinates, predict_count, Model, TwoStage};
pub use train::{train, AdamState, TargetData, TrainConfig, TrainHistory, TrainingData};

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

pub const ELU_ALPHA: f64 = 1.0;

#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        ELU_ALPHA * libm::expm1(x)
    }
}

#[inline]
pub fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        ELU_ALPHA * libm::exp(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Linear,
    Softmax,
}

impl Head {
    pub fn as_str(self) -> &'static str {
        match self {
            Head::Linear => "linear",
            Head::Softmax => "softmax",
        }
    }
}

impl core::str::FromStr for Head {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Head::Linear),
            "softmax" => Ok(Head::Softmax),
            other => Err(Error::invalid("head", alloc::format!("unknown head `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Row-major `inputs × outputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub inputs: usize,
    pub outputs: usize,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs], inputs, outputs }
    }

    pub fn weight(&self, i: usize, o: usize) -> f64 {
        self.weights[i * self.outputs + o]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    head: Head,
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::invalid("layer_dims", "need at least input and output layers"));
    }
    if dims.contains(&0) {
        return Err(Error::invalid("layer_dims", "layer widths must be >= 1"));
    }
    Ok(())
}

impl Mlp {
    pub fn from_layers(layers: Vec<Layer>, head: Head) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("layers", "need at least one layer"));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.weights.len() != layer.inputs * layer.outputs || layer.biases.len() != layer.outputs {
                return Err(Error::DimensionMismatch {
                    what: "layer parameter count",
                    expected: layer.inputs * layer.outputs + layer.outputs,
                    found: layer.weights.len() + layer.biases.len(),
                });
            }
            if l > 0 && layers[l - 1].outputs != layer.inputs {
                return Err(Error::DimensionMismatch {
                    what: "layer input width",
                    expected: layers[l - 1].outputs,
                    found: layer.inputs,
                });
            }
            if layer.weights.iter().chain(&layer.biases).any(|v| !v.is_finite()) {
                return Err(Error::invalid("layers", "parameters must be finite"));
            }
        }
        Ok(Self { layers, head })
    }

    pub fn zeros(dims: &[usize], head: Head) -> Result<Self> {
        check_dims(dims)?;
        let layers = dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self { layers, head })
    }

    /// Glorot-uniform weights, `U(±√(6 / (fan_in + fan_out)))`, zero biases.
    pub fn init_xavier<R: Rng + ?Sized>(dims: &[usize], head: Head, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(dims, head)?;
        for layer in &mut net.layers {
            let limit = libm::sqrt(6.0 / (layer.inputs + layer.outputs) as f64);
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].inputs];
        d.extend(self.layers.iter().map(|l| l.outputs));
        d
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_len(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Real multiplications of one forward pass, counting each bias as a
    /// multiplication by a constant-one input.
    pub fn count_multiplications(&self) -> u64 {
        count_multiplications(&self.dims())
    }

    /// Single-sample inference.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.input_len() {
            return Err(Error::DimensionMismatch {
                what: "feature length",
                expected: self.input_len(),
                found: features.len(),
            });
        }
        let mut cache = ForwardCache::default();
        Ok(self.forward_batch(features, 1, &mut cache).to_vec())
    }

    /// Batched forward pass over row-major `batch × input_len` inputs.
    /// Pre-activations and activations stay in `cache` for [`Mlp::backward`].
    pub fn forward_batch<'c>(&self, inputs: &[f64], batch: usize, cache: &'c mut ForwardCache) -> &'c [f64] {
        assert_eq!(inputs.len(), batch * self.input_len(), "input buffer size");
        cache.prepare(self, batch);
        cache.input.clear();
        cache.input.extend_from_slice(inputs);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, rest) = cache.act.split_at_mut(l);
            let a_in: &[f64] = if l == 0 { &cache.input } else { &prev[l - 1] };
            let z = &mut cache.pre[l];
            for row in z.chunks_exact_mut(layer.outputs) {
                row.copy_from_slice(&layer.biases);
            }
            gemm::nn(batch, layer.inputs, layer.outputs, a_in, &layer.weights, 1.0, z);
            let a = &mut rest[0];
            if l < last {
                for (ai, zi) in a.iter_mut().zip(z.iter()) {
                    *ai = elu(*zi);
                }
            } else {
                a.copy_from_slice(z);
                if self.head == Head::Softmax {
                    a.chunks_exact_mut(layer.outputs).for_each(softmax_in_place);
                }
            }
        }
        &cache.act[last]
    }

    /// Gradient of `data_loss + l2/2 · Σ‖W‖²` from the last forward pass.
    /// Returns the data loss (without the penalty).
    pub fn backward(&self, cache: &mut ForwardCache, targets: BatchTargets<'_>, l2: f64, grads: &mut Gradients) -> f64 {
        let batch = cache.batch;
        let last = self.layers.len() - 1;
        let out = &cache.act[last];
        let n_out = self.output_len();
        let delta = &mut cache.delta[last];
        let loss = match (self.head, targets) {
            (Head::Linear, BatchTargets::Regression(t)) => weighted_squared_error(out, t, &[1.0], delta),
            (Head::Linear, BatchTargets::WeightedRegression { targets, weights }) => {
                assert_eq!(weights.len(), n_out, "one weight per output unit");
                weighted_squared_error(out, targets, weights, delta)
            }
            (Head::Softmax, BatchTargets::Classes(c)) => {
                assert_eq!(c.len(), batch, "class label count");
                delta.copy_from_slice(out);
                let mut nll = 0.0;
                for (row, &k) in delta.chunks_exact_mut(n_out).zip(c) {
                    nll -= libm::log(row[k].max(f64::MIN_POSITIVE));
                    row[k] -= 1.0;
                    row.iter_mut().for_each(|v| *v /= batch as f64);
                }
                nll / batch as f64
            }
            _ => panic!("target kind does not match the network head"),
        };

        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let a_in: &[f64] = if l == 0 { &cache.input } else { &cache.act[l - 1] };
            let g = &mut grads.layers[l];
            g.weights.copy_from_slice(&layer.weights);
            g.weights.iter_mut().for_each(|w| *w *= l2);
            gemm::tn(layer.inputs, batch, layer.outputs, a_in, &cache.delta[l], 1.0, &mut g.weights);
            g.biases.iter_mut().for_each(|b| *b = 0.0);
            for row in cache.delta[l].chunks_exact(layer.outputs) {
                for (b, d) in g.biases.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if l > 0 {
                let (lower, upper) = cache.delta.split_at_mut(l);
                let d_prev = &mut lower[l - 1];
                gemm::nt(batch, layer.outputs, layer.inputs, &upper[0], &layer.weights, 0.0, d_prev);
                for (d, z) in d_prev.iter_mut().zip(&cache.pre[l - 1]) {
                    *d *= elu_grad(*z);
                }
            }
        }
        loss
    }
}

/// Mean of `w_k · e²` over all entries (weights cycle over output units);
/// writes its gradient into `delta`.
fn weighted_squared_error(out: &[f64], targets: &[f64], weights: &[f64], delta: &mut [f64]) -> f64 {
    assert_eq!(targets.len(), out.len(), "target buffer size");
    let scale = 2.0 / out.len() as f64;
    let mut sq = 0.0;
    for (((d, y), t), w) in delta.iter_mut().zip(out).zip(targets).zip(weights.iter().cycle()) {
        let e = y - t;
        sq += w * e * e;
        *d = scale * w * e;
    }
    sq / out.len() as f64
}

/// `Σ_{l=1}^{L-1} (N_u^(l-1) + 1) · N_u^(l)`.
pub fn count_multiplications(dims: &[usize]) -> u64 {
    dims.windows(2).map(|w| ((w[0] + 1) * w[1]) as u64).sum()
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Mean squared difference over all entries.
pub fn loss_mse(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len());
    pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64
}

/// [`loss_mse`] with per-output weights cycling over each row.
pub fn loss_weighted_mse(pred: &[f64], target: &[f64], weights: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len());
    pred.iter().zip(target).zip(weights.iter().cycle()).map(|((p, t), w)| w * (p - t) * (p - t)).sum::<f64>()
        / pred.len() as f64
}

/// Batch-averaged `−ln p[class]` over row-major `batch × n_classes` probabilities.
pub fn loss_xent(probs: &[f64], classes: &[usize]) -> f64 {
    let n_classes = probs.len() / classes.len();
    probs.chunks_exact(n_classes).zip(classes).map(|(row, &c)| -libm::log(row[c].max(f64::MIN_POSITIVE))).sum::<f64>()
        / classes.len() as f64
}

/// `l2 / 2 · Σ‖W‖²` over weights only.
pub fn l2_penalty(net: &Mlp, l2: f64) -> f64 {
    0.5 * l2 * net.layers.iter().flat_map(|l| &l.weights).map(|w| w * w).sum::<f64>()
}

#[derive(Debug, Clone, Copy)]
pub enum BatchTargets<'a> {
    /// Row-major `batch × outputs`.
    Regression(&'a [f64]),
    /// Row-major targets with one squared-error weight per output unit.
    WeightedRegression { targets: &'a [f64], weights: &'a [f64] },
    /// One class index per row.
    Classes(&'a [usize]),
}

/// Activations and pre-activations of the last batch.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    batch: usize,
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl ForwardCache {
    fn prepare(&mut self, net: &Mlp, batch: usize) {
        self.batch = batch;
        let n = net.layers.len();
        for buf in [&mut self.pre, &mut self.act, &mut self.delta] {
            buf.resize_with(n, Vec::new);
            for (v, layer) in buf.iter_mut().zip(&net.layers) {
                v.resize(batch * layer.outputs, 0.0);
            }
        }
    }

    /// Pre-activations of layer `l` for the cached batch.
    pub fn pre_activations(&self, l: usize) -> &[f64] {
        &self.pre[l]
    }
}

/// Parameter-shaped gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self { layers: net.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases)).fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedSchedule;

    #[test]
    fn elu_values() {
        assert_eq!(elu(0.0), 0.0);
        assert_eq!(elu_grad(0.0), 1.0);
        assert_eq!(elu(1.0), 1.0);
        assert!((elu(-50.0) + 1.0).abs() < 1e-15);
        assert!((elu(-1e-9) - (-1e-9)).abs() < 1e-17);
    }

    #[test]
    fn xavier_shapes_and_spread() {
        let mut rng = SeedSchedule::new(5).stream("init", 0);
        let net = Mlp::init_xavier(&[16, 128, 128, 128, 2], Head::Linear, &mut rng).unwrap();
        let shapes: Vec<(usize, usize)> = net.layers().iter().map(|l| (l.inputs, l.outputs)).collect();
        assert_eq!(shapes, [(16, 128), (128, 128), (128, 128), (128, 2)]);
        let w = &net.layers()[1].weights;
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let std = libm::sqrt(w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n);
        let expected = libm::sqrt(2.0 / 256.0);
        assert!((std - expected).abs() / expected < 0.05, "std {std}");
        assert!(net.layers().iter().all(|l| l.biases.iter().all(|b| *b == 0.0)));
        let mut rng2 = SeedSchedule::new(5).stream("init", 0);
        assert_eq!(net, Mlp::init_xavier(&[16, 128, 128, 128, 2], Head::Linear, &mut rng2).unwrap());
    }

    #[test]
    fn forward_trivial_networks() {
        let zero = Mlp::zeros(&[3, 4, 2], Head::Linear).unwrap();
        assert_eq!(zero.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert!(zero.forward(&[1.0]).is_err());

        let mut id = Mlp::zeros(&[3, 3], Head::Linear).unwrap();
        for i in 0..3 {
            id.layers_mut()[0].weights[i * 3 + i] = 1.0;
        }
        assert_eq!(id.forward(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn softmax_head_is_normalized() {
        let mut rng = SeedSchedule::new(9).stream("init", 0);
        let net = Mlp::init_xavier(&[5, 8, 4], Head::Softmax, &mut rng).unwrap();
        let p = net.forward(&[3.0, -1.0, 0.5, 2.0, 10.0]).unwrap();
        assert!(p.iter().all(|v| *v > 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss_mse(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((loss_xent(&[0.25; 4], &[2]) - libm::log(4.0)).abs() < 1e-15);
        assert_eq!(loss_xent(&[0.0, 1.0, 0.0], &[1]), 0.0);
        // Batch MSE is the mean of per-sample MSEs for equal-width rows.
        let pred = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let tgt = [0.0, 2.5, 3.0, 1.0, 5.5, 7.0];
        let per: f64 = pred.chunks(2).zip(tgt.chunks(2)).map(|(p, t)| loss_mse(p, t)).sum::<f64>() / 3.0;
        assert!((loss_mse(&pred, &tgt) - per).abs() < 1e-15);
    }

    #[test]
    fn multiplication_counts() {
        assert_eq!(count_multiplications(&[16, 128, 128, 128, 2]), 35458);
        assert_eq!(count_multiplications(&[1, 1]), 2);
    }

    #[test]
    fn head_parse() {
        assert_eq!("softmax".parse::<Head>().unwrap(), Head::Softmax);
        assert!("relu".parse::<Head>().is_err());
    }
}
