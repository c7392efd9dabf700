//! Scenario sampling, label ordering, dataset generation, splitting and
//! input/target normalization.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Area, Point2};
use crate::propagation::{
    received_power, shadowing_covariance, PropagationParams, SensorLayout, ShadowingField, TransmitterSet,
};
use crate::rng::SeedSchedule;

/// One labelled measurement: RSS per sensor plus ordered transmitter
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub rss: Vec<f64>,
    pub coords: Vec<Point2>,
}

impl Sample {
    pub fn tx_count(&self) -> usize {
        self.coords.len()
    }

    pub fn transmitters(&self) -> TransmitterSet {
        TransmitterSet::new(self.coords.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub layout: SensorLayout,
    pub params: PropagationParams,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn empty(layout: SensorLayout, params: PropagationParams) -> Self {
        Self { layout, params, samples: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples with exactly `n_t` transmitters, as a new dataset.
    pub fn with_tx_count(&self, n_t: usize) -> Dataset {
        Dataset {
            layout: self.layout.clone(),
            params: self.params,
            samples: self.samples.iter().filter(|s| s.tx_count() == n_t).cloned().collect(),
        }
    }

    pub fn max_tx_count(&self) -> usize {
        self.samples.iter().map(Sample::tx_count).max().unwrap_or(0)
    }

    /// Checks that every record matches the layout and carries finite values.
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.rss.len() != self.layout.len() {
                return Err(Error::DimensionMismatch {
                    what: "rss values per sample",
                    expected: self.layout.len(),
                    found: s.rss.len(),
                });
            }
            if s.coords.is_empty() {
                return Err(Error::invalid("sample", format!("record {i} has no transmitters")));
            }
            if s.rss.iter().chain(s.coords.iter().flat_map(|p| [&p.x, &p.y])).any(|v| !v.is_finite()) {
                return Err(Error::invalid("sample", format!("record {i} has non-finite values")));
            }
        }
        Ok(())
    }
}

/// `n_t` i.i.d. uniform points in the area.
pub fn sample_scenario<R: Rng + ?Sized>(n_t: usize, area: Area, rng: &mut R) -> TransmitterSet {
    TransmitterSet::new(
        (0..n_t)
            .map(|_| {
                let x = rng.random::<f64>() * area.width;
                let y = rng.random::<f64>() * area.height;
                Point2::new(x, y)
            })
            .collect(),
    )
}

/// Lexicographic order: ascending x, ties by ascending y.
pub fn order_labels(coords: &[Point2]) -> Vec<Point2> {
    let mut out = coords.to_vec();
    out.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    /// Samples generated for each transmitter count.
    pub samples_per_count: usize,
    /// Counts `1..=max_tx_count` are generated.
    pub max_tx_count: usize,
}

/// Draws one sample with `n_t` transmitters: independent shadowing per
/// transmitter, superposed powers, ordered labels.
pub fn generate_sample<R: Rng + ?Sized>(
    n_t: usize,
    layout: &SensorLayout,
    params: &PropagationParams,
    field: &ShadowingField,
    rng: &mut R,
) -> Result<Sample> {
    let txs = sample_scenario(n_t, layout.area(), rng);
    let shadowing: Vec<Vec<f64>> = (0..n_t).map(|_| field.sample(rng)).collect();
    let rss = received_power(&txs, layout, params, &shadowing)?;
    Ok(Sample { rss, coords: order_labels(&txs.coords) })
}

/// Flat index of the `k`-th sample of count `n_t`; the per-sample rng stream
/// is derived from it.
pub fn sample_stream_index(n_t: usize, k: usize, samples_per_count: usize) -> u64 {
    ((n_t - 1) * samples_per_count + k) as u64
}

/// Generates `samples_per_count` samples for each count in
/// `1..=max_tx_count`, every sample on its own sub-stream `(stream, index)`.
/// Train and test sets use different stream names.
pub fn generate_dataset(
    layout: &SensorLayout,
    params: &PropagationParams,
    config: &GenConfig,
    seeds: &SeedSchedule,
    stream: &str,
) -> Result<Dataset> {
    params.validate()?;
    if config.max_tx_count == 0 {
        return Err(Error::invalid("nt_max", "must be >= 1"));
    }
    let field = shadowing_covariance(layout, params.shadow_variance_db, params.decorrelation_distance)?;
    let mut samples = Vec::with_capacity(config.samples_per_count * config.max_tx_count);
    for n_t in 1..=config.max_tx_count {
        for k in 0..config.samples_per_count {
            let mut rng = seeds.stream(stream, sample_stream_index(n_t, k, config.samples_per_count));
            samples.push(generate_sample(n_t, layout, params, &field, &mut rng)?);
        }
    }
    Ok(Dataset { layout: layout.clone(), params: *params, samples })
}

/// Stratified shuffled split; the first part receives `round(fraction · N)`
/// samples, apportioned over transmitter counts by largest remainder.
pub fn split_train_val<R: Rng + ?Sized>(dataset: &Dataset, fraction: f64, rng: &mut R) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid("fraction", format!("must be in (0, 1), got {fraction}")));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::invalid("dataset", format!("need at least 2 samples to split, got {n}")));
    }
    let max_count = dataset.max_tx_count();
    let mut groups: Vec<Vec<usize>> = (0..=max_count).map(|_| Vec::new()).collect();
    for (i, s) in dataset.samples.iter().enumerate() {
        groups[s.tx_count()].push(i);
    }
    let target = (libm::round(fraction * n as f64) as usize).clamp(1, n - 1);
    let mut take: Vec<usize> = groups.iter().map(|g| libm::floor(fraction * g.len() as f64) as usize).collect();
    let mut order: Vec<usize> = (0..groups.len()).filter(|&c| !groups[c].is_empty()).collect();
    order.sort_by(|&a, &b| {
        let ra = fraction * groups[a].len() as f64 - take[a] as f64;
        let rb = fraction * groups[b].len() as f64 - take[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = take.iter().sum();
    for &c in order.iter().cycle().take(2 * order.len()) {
        if assigned >= target {
            break;
        }
        if take[c] < groups[c].len() {
            take[c] += 1;
            assigned += 1;
        }
    }
    let mut first = Vec::with_capacity(target);
    let mut second = Vec::with_capacity(n - target);
    for (c, g) in groups.iter_mut().enumerate() {
        g.shuffle(rng);
        first.extend(g[..take[c]].iter().map(|&i| dataset.samples[i].clone()));
        second.extend(g[take[c]..].iter().map(|&i| dataset.samples[i].clone()));
    }
    let part = |samples| Dataset { layout: dataset.layout.clone(), params: dataset.params, samples };
    Ok((part(first), part(second)))
}

/// Per-sensor z-scoring of RSS features and area scaling of coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub area: Area,
}

impl Normalizer {
    /// Fits feature statistics on the training samples only.
    pub fn fit(train: &[Sample], area: Area) -> Result<Self> {
        let first = train.first().ok_or_else(|| Error::invalid("train", "cannot fit a normalizer on an empty set"))?;
        let n_s = first.rss.len();
        let n = train.len() as f64;
        let mut mean = alloc::vec![0.0; n_s];
        for s in train {
            if s.rss.len() != n_s {
                return Err(Error::DimensionMismatch {
                    what: "rss values per sample",
                    expected: n_s,
                    found: s.rss.len(),
                });
            }
            for (m, v) in mean.iter_mut().zip(&s.rss) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = alloc::vec![0.0; n_s];
        for s in train {
            for ((acc, v), m) in var.iter_mut().zip(&s.rss).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|v| libm::sqrt(v / n)).collect();
        Ok(Self { mean, std, area })
    }

    pub fn feature_len(&self) -> usize {
        self.mean.len()
    }

    /// Zero-variance sensors are only centered.
    pub fn features(&self, rss: &[f64]) -> Vec<f64> {
        rss.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { v - m })
            .collect()
    }

    pub fn targets(&self, coords: &[Point2]) -> Vec<f64> {
        coords.iter().flat_map(|p| [p.x / self.area.width, p.y / self.area.height]).collect()
    }

    /// Squared-error weights `(A_w², A_h², …)` for `n_t` transmitters, so a
    /// loss on scaled targets equals the loss in m².
    pub fn target_weights(&self, n_t: usize) -> Vec<f64> {
        let (w, h) = (self.area.width, self.area.height);
        (0..n_t).flat_map(|_| [w * w, h * h]).collect()
    }

    pub fn inverse_targets(&self, scaled: &[f64]) -> Vec<Point2> {
        scaled.chunks_exact(2).map(|c| Point2::new(c[0] * self.area.width, c[1] * self.area.height)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::grid_layout;
    use alloc::vec;

    fn small_dataset(per: usize, seed: u64) -> Dataset {
        let layout = grid_layout(16, Area::square(20.0).unwrap()).unwrap();
        generate_dataset(
            &layout,
            &PropagationParams::indoor_defaults(),
            &GenConfig { samples_per_count: per, max_tx_count: 4 },
            &SeedSchedule::new(seed),
            "train",
        )
        .unwrap()
    }

    #[test]
    fn scenario_cardinality_and_bounds() {
        let mut rng = SeedSchedule::new(3).stream("s", 0);
        let area = Area::square(20.0).unwrap();
        let txs = sample_scenario(4, area, &mut rng);
        assert_eq!(txs.len(), 4);
        assert!(txs.coords.iter().all(|p| area.contains(*p)));
        let zero = sample_scenario(3, Area::new(0.0, 0.0).unwrap(), &mut rng);
        assert!(zero.coords.iter().all(|p| *p == Point2::new(0.0, 0.0)));
    }

    #[test]
    fn ordering_examples() {
        let p = |x, y| Point2::new(x, y);
        assert_eq!(order_labels(&[p(5.0, 9.0), p(1.0, 2.0)]), vec![p(1.0, 2.0), p(5.0, 9.0)]);
        assert_eq!(order_labels(&[p(1.0, 9.0), p(5.0, 2.0)]), vec![p(1.0, 9.0), p(5.0, 2.0)]);
        assert_eq!(order_labels(&[p(1.0, 9.0), p(1.0, 2.0)]), vec![p(1.0, 2.0), p(1.0, 9.0)]);
    }

    #[test]
    fn generation_counts_and_determinism() {
        let a = small_dataset(5, 11);
        assert_eq!(a.len(), 20);
        for n_t in 1..=4 {
            assert_eq!(a.with_tx_count(n_t).len(), 5);
        }
        assert_eq!(a, small_dataset(5, 11));
        assert_ne!(a, small_dataset(5, 12));
        a.validate().unwrap();
        assert!(small_dataset(0, 1).is_empty());
    }

    #[test]
    fn split_sizes() {
        let layout = grid_layout(4, Area::square(10.0).unwrap()).unwrap();
        let params = PropagationParams::indoor_defaults();
        let ds = generate_dataset(
            &layout,
            &params,
            &GenConfig { samples_per_count: 10, max_tx_count: 1 },
            &SeedSchedule::new(1),
            "x",
        )
        .unwrap();
        let mut rng = SeedSchedule::new(1).stream("split", 0);
        let (tr, va) = split_train_val(&ds, 0.8, &mut rng).unwrap();
        assert_eq!((tr.len(), va.len()), (8, 2));

        let big = small_dataset(750, 2);
        let (tr, va) = split_train_val(&big, 0.8, &mut rng).unwrap();
        assert_eq!((tr.len(), va.len()), (2400, 600));
        for n_t in 1..=4 {
            assert_eq!(tr.with_tx_count(n_t).len(), 600);
        }
    }

    #[test]
    fn split_rejects_tiny_and_bad_fraction() {
        let mut rng = SeedSchedule::new(1).stream("split", 0);
        let one = small_dataset(1, 1).with_tx_count(1);
        assert!(split_train_val(&one, 0.8, &mut rng).is_err());
        let ds = small_dataset(3, 1);
        assert!(split_train_val(&ds, 1.0, &mut rng).is_err());
        assert!(split_train_val(&ds, 0.0, &mut rng).is_err());
    }

    #[test]
    fn normalizer_statistics_and_round_trip() {
        let ds = small_dataset(50, 4);
        let norm = Normalizer::fit(&ds.samples, ds.layout.area()).unwrap();
        let feats: Vec<Vec<f64>> = ds.samples.iter().map(|s| norm.features(&s.rss)).collect();
        let n = feats.len() as f64;
        for j in 0..16 {
            let mean: f64 = feats.iter().map(|f| f[j]).sum::<f64>() / n;
            let var: f64 = feats.iter().map(|f| (f[j] - mean) * (f[j] - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-10);
            assert!((libm::sqrt(var) - 1.0).abs() < 1e-10);
        }
        for s in &ds.samples {
            let back = norm.inverse_targets(&norm.targets(&s.coords));
            for (a, b) in back.iter().zip(&s.coords) {
                assert!(a.distance(*b) < 1e-12);
            }
        }
    }

    #[test]
    fn constant_feature_is_centered() {
        let samples: Vec<Sample> =
            (0..5).map(|i| Sample { rss: vec![-40.0, i as f64], coords: vec![Point2::new(1.0, 1.0)] }).collect();
        let norm = Normalizer::fit(&samples, Area::square(10.0).unwrap()).unwrap();
        assert!(samples.iter().all(|s| norm.features(&s.rss)[0] == 0.0));
        assert!(Normalizer::fit(&[], Area::square(1.0).unwrap()).is_err());
    }
}
