//! Histogram thresholding and connected-region labeling of a radio map.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::map::{argmax_index, RadioMap};
use crate::propagation::TransmitterSet;

pub const HISTOGRAM_BINS: usize = 256;

/// A 4-connected set of supra-threshold pixels (row-major indices, sorted).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub pixels: Vec<usize>,
}

impl Region {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Histogram bin of every value over `[min, max]`, or `None` for a constant
/// input.
fn bin_values(values: &[f64]) -> Option<Vec<usize>> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if !(hi > lo) {
        return None;
    }
    let scale = HISTOGRAM_BINS as f64 / (hi - lo);
    Some(values.iter().map(|v| (((v - lo) * scale) as usize).min(HISTOGRAM_BINS - 1)).collect())
}

/// Otsu's method over a histogram: the last bin of the lower class that
/// maximizes the between-class variance (first maximum wins).
pub fn otsu_bin(histogram: &[usize]) -> usize {
    let total: f64 = histogram.iter().map(|&c| c as f64).sum();
    let sum_all: f64 = histogram.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_var) = (0, -1.0);
    for (t, &c) in histogram.iter().enumerate() {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best = t;
        }
    }
    best
}

/// Otsu threshold in dB (upper edge of the lower class), `None` for a
/// constant map.
pub fn otsu_threshold(values: &[f64]) -> Option<f64> {
    let bins = bin_values(values)?;
    let mut hist = [0usize; HISTOGRAM_BINS];
    bins.iter().for_each(|&b| hist[b] += 1);
    let t = otsu_bin(&hist);
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    Some(lo + (t + 1) as f64 * (hi - lo) / HISTOGRAM_BINS as f64)
}

/// Smallest region kept by [`threshold_segment`]: `(d_c / R)²` pixels.
pub fn min_region_pixels(decorrelation_distance: f64, resolution: f64) -> usize {
    let side = decorrelation_distance / resolution;
    libm::ceil(side * side - 1e-9).max(1.0) as usize
}

/// Otsu threshold on a 256-bin histogram over `[min, max]`, 4-connected
/// labeling of the pixels above it, and removal of regions smaller than
/// `min_region` pixels. A constant map yields one region covering it.
pub fn threshold_segment(rem: &RadioMap, min_region: usize) -> Vec<Region> {
    let values = rem.values();
    let Some(bins) = bin_values(values) else {
        return vec![Region { pixels: (0..values.len()).collect() }];
    };
    let mut hist = [0usize; HISTOGRAM_BINS];
    bins.iter().for_each(|&b| hist[b] += 1);
    let t = otsu_bin(&hist);
    let mask: Vec<bool> = bins.iter().map(|&b| b > t).collect();
    label_regions(&mask, rem.width_px(), rem.height_px()).into_iter().filter(|r| r.len() >= min_region).collect()
}

/// 4-connected components of `mask` (row-major `rows × cols`), ordered by
/// their first pixel.
pub fn label_regions(mask: &[bool], rows: usize, cols: usize) -> Vec<Region> {
    let mut seen = vec![false; mask.len()];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(p) = queue.pop_front() {
            pixels.push(p);
            let (r, c) = (p / cols, p % cols);
            let mut visit = |q: usize| {
                if mask[q] && !seen[q] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            };
            if r > 0 {
                visit(p - cols);
            }
            if r + 1 < rows {
                visit(p + cols);
            }
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < cols {
                visit(p + 1);
            }
        }
        pixels.sort_unstable();
        regions.push(Region { pixels });
    }
    regions
}

/// Highest pixel of each region, at its center. The number of estimates is
/// the number of regions.
pub fn localize_regions(rem: &RadioMap, regions: &[Region]) -> TransmitterSet {
    TransmitterSet::new(
        regions
            .iter()
            .filter(|r| !r.is_empty())
            .map(|r| rem.center_of_index(argmax_index(rem.values(), r.pixels.iter().copied())))
            .collect(),
    )
}

/// Region-wise localization; falls back to the global argmax when every
/// region is below `min_region`, so at least one estimate is returned.
pub fn localize_multi(rem: &RadioMap, min_region: usize) -> TransmitterSet {
    let est = localize_regions(rem, &threshold_segment(rem, min_region));
    if est.is_empty() {
        TransmitterSet::new(vec![rem.argmax_pixel()])
    } else {
        est
    }
}
