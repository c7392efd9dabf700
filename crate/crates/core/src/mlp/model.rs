use alloc::format;
use alloc::vec::Vec;

use super::{Head, Mlp, TargetData, TrainingData};
use crate::datasets::{Normalizer, Sample};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::propagation::TransmitterSet;

/// A network together with the normalization it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub net: Mlp,
    pub norm: Normalizer,
}

impl Model {
    /// Regression data: z-scored RSS in, area-scaled ordered coordinates out,
    /// with the squared error weighted back to m².
    pub fn regression_data(norm: &Normalizer, samples: &[Sample]) -> TrainingData {
        let mut inputs = Vec::with_capacity(samples.len() * norm.feature_len());
        let mut targets = Vec::new();
        for s in samples {
            inputs.extend(norm.features(&s.rss));
            targets.extend(norm.targets(&s.coords));
        }
        TrainingData {
            inputs,
            features: norm.feature_len(),
            targets: TargetData::Regression(targets),
            output_weights: samples.first().map_or_else(Vec::new, |s| norm.target_weights(s.tx_count())),
        }
    }

    /// Classification data: class `k` stands for `k + 1` transmitters.
    pub fn classification_data(norm: &Normalizer, samples: &[Sample]) -> TrainingData {
        let mut inputs = Vec::with_capacity(samples.len() * norm.feature_len());
        let mut classes = Vec::with_capacity(samples.len());
        for s in samples {
            inputs.extend(norm.features(&s.rss));
            classes.push(s.tx_count() - 1);
        }
        TrainingData {
            inputs,
            features: norm.feature_len(),
            targets: TargetData::Classes(classes),
            output_weights: Vec::new(),
        }
    }
}

/// Most probable transmitter count and the class probabilities; exact ties
/// go to the smaller count.
pub fn predict_count(classifier: &Model, rss: &[f64]) -> Result<(usize, Vec<f64>)> {
    if classifier.net.head() != Head::Softmax {
        return Err(Error::invalid("classifier", "count prediction needs a softmax head"));
    }
    let probs = classifier.net.forward(&classifier.norm.features(rss))?;
    Ok((argmax_first(&probs) + 1, probs))
}

pub(crate) fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Network output mapped back to meters and clipped to the area.
pub fn predict_coordinates(regressor: &Model, rss: &[f64], n_t: usize) -> Result<TransmitterSet> {
    if regressor.net.head() != Head::Linear || regressor.net.output_len() != 2 * n_t {
        return Err(Error::invalid(
            "regressor",
            format!(
                "expected a linear head with {} outputs for {n_t} transmitters, found {} {}",
                2 * n_t,
                regressor.net.output_len(),
                regressor.net.head().as_str()
            ),
        ));
    }
    let out = regressor.net.forward(&regressor.norm.features(rss))?;
    let area = regressor.norm.area;
    let coords: Vec<Point2> = regressor.norm.inverse_targets(&out).into_iter().map(|p| area.clamp(p)).collect();
    Ok(TransmitterSet::new(coords))
}

/// Count classifier followed by the count-specific regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStage {
    pub classifier: Model,
    /// `regressors[k]` localizes `k + 1` transmitters.
    pub regressors: Vec<Model>,
}

impl TwoStage {
    pub fn max_tx_count(&self) -> usize {
        self.regressors.len()
    }

    pub fn regressor(&self, n_t: usize) -> Result<&Model> {
        n_t.checked_sub(1)
            .and_then(|k| self.regressors.get(k))
            .ok_or_else(|| Error::invalid("n_t", format!("no regressor trained for {n_t} transmitters")))
    }

    /// Estimated count and coordinates.
    pub fn localize(&self, rss: &[f64]) -> Result<(usize, TransmitterSet)> {
        let (n_t, _) = predict_count(&self.classifier, rss)?;
        let n_t = n_t.min(self.max_tx_count());
        Ok((n_t, predict_coordinates(self.regressor(n_t)?, rss, n_t)?))
    }

    /// Coordinates with an externally known count.
    pub fn localize_known(&self, rss: &[f64], n_t: usize) -> Result<TransmitterSet> {
        predict_coordinates(self.regressor(n_t)?, rss, n_t)
    }
}
