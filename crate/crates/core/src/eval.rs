//! Localization metrics: optimal estimate/truth matching, empirical CDFs,
//! RMSE, confusion matrices, the random-guess baseline and sweep geometry.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::datasets::{sample_scenario, Sample};
use crate::error::{Error, Result};
use crate::geometry::{Area, Point2};
use crate::propagation::TransmitterSet;

/// One-to-one pairing of truths and estimates over `min(|truth|, |est|)`
/// pairs with minimum total Euclidean distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `(truth index, estimate index, distance)`, ordered by truth index.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_truths: Vec<usize>,
}

impl Matching {
    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.2)
    }

    pub fn total_cost(&self) -> f64 {
        self.errors().sum()
    }
}

/// Exhaustive search over injective assignments of the smaller set into the
/// larger one, with branch-and-bound pruning. Ties keep the
/// lexicographically first assignment.
pub fn match_estimates(truth: &TransmitterSet, estimates: &TransmitterSet) -> Matching {
    let (t, e) = (&truth.coords, &estimates.coords);
    if t.is_empty() || e.is_empty() {
        return Matching { pairs: Vec::new(), unmatched_truths: (0..t.len()).collect() };
    }
    let swap = e.len() < t.len();
    let (small, large) = if swap { (e, t) } else { (t, e) };
    let cost: Vec<Vec<f64>> = small.iter().map(|a| large.iter().map(|b| a.distance(*b)).collect()).collect();

    struct Search<'a> {
        cost: &'a [Vec<f64>],
        used: Vec<bool>,
        current: Vec<usize>,
        best: Vec<usize>,
        best_cost: f64,
    }
    impl Search<'_> {
        fn go(&mut self, row: usize, acc: f64) {
            if acc >= self.best_cost {
                return;
            }
            if row == self.cost.len() {
                self.best_cost = acc;
                self.best.clone_from(&self.current);
                return;
            }
            for col in 0..self.used.len() {
                if !self.used[col] {
                    self.used[col] = true;
                    self.current.push(col);
                    self.go(row + 1, acc + self.cost[row][col]);
                    self.current.pop();
                    self.used[col] = false;
                }
            }
        }
    }
    let mut s = Search {
        cost: &cost,
        used: vec![false; large.len()],
        current: Vec::with_capacity(small.len()),
        best: Vec::new(),
        best_cost: f64::INFINITY,
    };
    s.go(0, 0.0);

    let mut pairs: Vec<(usize, usize, f64)> =
        s.best.iter().enumerate().map(|(i, &j)| if swap { (j, i, cost[i][j]) } else { (i, j, cost[i][j]) }).collect();
    pairs.sort_by_key(|p| p.0);
    let unmatched_truths = (0..t.len()).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
    Matching { pairs, unmatched_truths }
}

/// Empirical CDF at the distinct sorted sample values: `(x, F(x))`.
pub fn error_cdf(errors: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in sorted.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = f,
            _ => out.push((*x, f)),
        }
    }
    out
}

/// `F(x)` of the empirical distribution of `errors`.
pub fn ecdf_at(errors: &[f64], x: f64) -> f64 {
    if errors.is_empty() {
        return f64::NAN;
    }
    errors.iter().filter(|e| **e <= x).count() as f64 / errors.len() as f64
}

/// Linear-interpolated quantile, `q ∈ [0, 1]`.
pub fn quantile(errors: &[f64], q: f64) -> f64 {
    if errors.is_empty() {
        return f64::NAN;
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn median(errors: &[f64]) -> f64 {
    quantile(errors, 0.5)
}

pub fn rmse(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return f64::NAN;
    }
    libm::sqrt(errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max(libm::fabs(i as f64 / a.len() as f64 - j as f64 / b.len() as f64));
    }
    d
}

/// Matched errors of many samples pooled together.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorSummary {
    pub errors: Vec<f64>,
    pub unmatched_truths: usize,
    pub samples: usize,
}

impl ErrorSummary {
    pub fn push(&mut self, truth: &TransmitterSet, estimates: &TransmitterSet) {
        let m = match_estimates(truth, estimates);
        self.errors.extend(m.errors());
        self.unmatched_truths += m.unmatched_truths.len();
        self.samples += 1;
    }

    pub fn rmse(&self) -> f64 {
        rmse(&self.errors)
    }

    pub fn median(&self) -> f64 {
        median(&self.errors)
    }

    pub fn quantile(&self, q: f64) -> f64 {
        quantile(&self.errors, q)
    }

    pub fn cdf(&self) -> Vec<(f64, f64)> {
        error_cdf(&self.errors)
    }
}

/// Counts indexed `[true][predicted]` over classes `1..=n_classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

pub fn confusion(predicted: &[usize], truth: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            what: "confusion label lists",
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if !(1..=n_classes).contains(&p) || !(1..=n_classes).contains(&t) {
            return Err(Error::invalid("class", format!("labels must be in 1..={n_classes}")));
        }
        counts[t - 1][p - 1] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Column-normalized diagonal; `None` when nothing was predicted as `class`.
    pub fn precision(&self, class: usize) -> Option<f64> {
        let k = class - 1;
        let col: u64 = self.counts.iter().map(|row| row[k]).sum();
        (col > 0).then(|| self.counts[k][k] as f64 / col as f64)
    }

    /// Row-normalized diagonal; `None` when `class` never occurs.
    pub fn recall(&self, class: usize) -> Option<f64> {
        let k = class - 1;
        let row: u64 = self.counts[k].iter().sum();
        (row > 0).then(|| self.counts[k][k] as f64 / row as f64)
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        let diag: u64 = (0..self.n_classes()).map(|k| self.counts[k][k]).sum();
        (total > 0).then(|| diag as f64 / total as f64)
    }
}

/// RMSE of matched errors for every (model trained for `n`, true count `m`)
/// pair. `test_sets[m - 1]` holds samples with `m` transmitters and
/// `predict(n, sample)` runs the count-`n` model.
pub fn rmse_matrix<F>(max_count: usize, test_sets: &[Vec<Sample>], mut predict: F) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(usize, &Sample) -> Result<TransmitterSet>,
{
    let mut out = vec![vec![f64::NAN; test_sets.len()]; max_count];
    for n in 1..=max_count {
        for (m_idx, set) in test_sets.iter().enumerate() {
            let mut summary = ErrorSummary::default();
            for s in set {
                summary.push(&s.transmitters(), &predict(n, s)?);
            }
            out[n - 1][m_idx] = summary.rmse();
        }
    }
    Ok(out)
}

/// Uniform guesses over the area.
pub fn random_guess<R: Rng + ?Sized>(area: Area, n_t: usize, rng: &mut R) -> TransmitterSet {
    sample_scenario(n_t, area, rng)
}

/// Mean distance between two independent uniform points in the unit square,
/// `(2 + √2 + 5 ln(1 + √2)) / 15`.
pub fn unit_square_mean_distance() -> f64 {
    let s2 = core::f64::consts::SQRT_2;
    (2.0 + s2 + 5.0 * libm::log(1.0 + s2)) / 15.0
}

/// Sensors per 100 m².
pub fn sensor_density(n_s: usize, area: Area) -> f64 {
    100.0 * n_s as f64 / area.size()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// Area grows with `N_s` so that `A / N_s` stays fixed.
    ConstantDensity,
    /// Fixed area, varying `N_s`.
    ConstantArea,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub n_s: usize,
    pub area: Area,
    pub density: f64,
}

/// Constant density: each grid value is `N_s`, the square side is chosen to
/// keep `density` sensors per 100 m². Constant area: each grid value is a
/// density on the fixed `area`.
pub fn sweep_points(mode: SweepMode, grid: &[f64], density: f64, area: Area) -> Result<Vec<SweepPoint>> {
    grid.iter()
        .map(|&g| match mode {
            SweepMode::ConstantDensity => {
                let n_s = g as usize;
                if n_s == 0 || n_s as f64 != g {
                    return Err(Error::invalid("sweep grid", format!("sensor count {g} is not a positive integer")));
                }
                let side = libm::sqrt(100.0 * g / density);
                Ok(SweepPoint { n_s, area: Area::square(side)?, density })
            }
            SweepMode::ConstantArea => {
                let n = g * area.size() / 100.0;
                let n_s = libm::round(n) as usize;
                if n_s == 0 || libm::fabs(n - n_s as f64) > 1e-9 {
                    return Err(Error::invalid(
                        "sweep grid",
                        format!("density {g} does not give an integer sensor count on this area"),
                    ));
                }
                Ok(SweepPoint { n_s, area, density: g })
            }
        })
        .collect()
}

/// Matched distances between truth and estimate points (convenience for
/// single-transmitter cases).
pub fn point_errors(truth: &[Point2], est: &[Point2]) -> Vec<f64> {
    match_estimates(&TransmitterSet::new(truth.to_vec()), &TransmitterSet::new(est.to_vec())).errors().collect()
}
