//! Log-distance path loss with spatially correlated log-normal shadowing and
//! linear-domain superposition of several transmitters.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{Area, Point2};
use crate::linalg::{self, SquareMatrix};

/// Fixed sensing-unit positions inside a rectangular area.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorLayout {
    positions: Vec<Point2>,
    area: Area,
}

impl SensorLayout {
    pub fn new(positions: Vec<Point2>, area: Area) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("layout", "at least one sensor is required"));
        }
        if let Some(p) = positions.iter().find(|p| !area.contains(**p)) {
            return Err(Error::invalid("layout", format!("sensor ({}, {}) lies outside the area", p.x, p.y)));
        }
        for (i, a) in positions.iter().enumerate() {
            if positions[..i].iter().any(|b| b == a) {
                return Err(Error::invalid("layout", format!("duplicate sensor position ({}, {})", a.x, a.y)));
            }
        }
        Ok(Self { positions, area })
    }

    pub fn positions(&self) -> &[Point2] {
        &self.positions
    }

    pub fn area(&self) -> Area {
        self.area
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Sensors per 100 m².
    pub fn density(&self) -> f64 {
        100.0 * self.len() as f64 / self.area.size()
    }
}

/// `√n × √n` grid with each sensor at the center of an equal cell.
pub fn grid_layout(n_s: usize, area: Area) -> Result<SensorLayout> {
    let side = integer_sqrt(n_s);
    if n_s == 0 || side * side != n_s {
        return Err(Error::invalid("n_s", format!("a grid layout needs a perfect-square sensor count, got {n_s}")));
    }
    if !(area.width > 0.0 && area.height > 0.0) {
        return Err(Error::invalid("area", "grid layout needs a positive area"));
    }
    let (dx, dy) = (area.width / side as f64, area.height / side as f64);
    let mut positions = Vec::with_capacity(n_s);
    for iy in 0..side {
        for ix in 0..side {
            positions.push(Point2::new((ix as f64 + 0.5) * dx, (iy as f64 + 0.5) * dy));
        }
    }
    SensorLayout::new(positions, area)
}

fn integer_sqrt(n: usize) -> usize {
    let mut r = libm::sqrt(n as f64) as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Channel parameters. Powers are in dB relative to the same unit (dBm by
/// convention).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationParams {
    pub ref_power_db: f64,
    pub ref_distance: f64,
    pub path_loss_exponent: f64,
    pub shadow_variance_db: f64,
    pub decorrelation_distance: f64,
}

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Free-space path loss in dB at distance `d` and carrier `freq_hz`.
pub fn free_space_path_loss_db(d: f64, freq_hz: f64) -> f64 {
    20.0 * libm::log10(4.0 * core::f64::consts::PI * d * freq_hz / SPEED_OF_LIGHT)
}

impl PropagationParams {
    /// 20 dBm at 2.4 GHz, β = 3.23, σ² = 10 dB², d_c = 1 m, d_0 = 1 m.
    /// The reference power is the transmit power minus free-space loss over
    /// `d_0`.
    pub fn indoor_defaults() -> Self {
        let d0 = 1.0;
        Self {
            ref_power_db: 20.0 - free_space_path_loss_db(d0, 2.4e9),
            ref_distance: d0,
            path_loss_exponent: 3.23,
            shadow_variance_db: 10.0,
            decorrelation_distance: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.ref_power_db.is_finite() {
            return Err(Error::invalid("p0", "must be finite"));
        }
        if !(self.ref_distance > 0.0 && self.ref_distance.is_finite()) {
            return Err(Error::invalid("d0", "must be > 0"));
        }
        if !(self.path_loss_exponent > 0.0 && self.path_loss_exponent.is_finite()) {
            return Err(Error::invalid("beta", "must be > 0"));
        }
        if !(self.shadow_variance_db >= 0.0 && self.shadow_variance_db.is_finite()) {
            return Err(Error::invalid("sigma2", "must be >= 0"));
        }
        if !(self.decorrelation_distance > 0.0 && self.decorrelation_distance.is_finite()) {
            return Err(Error::invalid("dc", "must be > 0"));
        }
        Ok(())
    }

    /// Deterministic received power in dB at distance `d`, with distances
    /// below `d_0` clamped to `d_0`.
    pub fn path_power_db(&self, d: f64) -> f64 {
        let d = d.max(self.ref_distance);
        self.ref_power_db - 10.0 * self.path_loss_exponent * libm::log10(d / self.ref_distance)
    }
}

/// Active transmitter coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransmitterSet {
    pub coords: Vec<Point2>,
}

impl TransmitterSet {
    pub fn new(coords: Vec<Point2>) -> Self {
        Self { coords }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn validate(&self, area: Area, max_count: usize) -> Result<()> {
        if self.coords.is_empty() || self.coords.len() > max_count {
            return Err(Error::invalid(
                "transmitters",
                format!("count must be in 1..={max_count}, got {}", self.coords.len()),
            ));
        }
        if self.coords.iter().any(|p| !area.contains(*p)) {
            return Err(Error::invalid("transmitters", "coordinates outside the area"));
        }
        Ok(())
    }

    /// Flattened `[x1, y1, x2, y2, ...]`.
    pub fn flatten(&self) -> Vec<f64> {
        self.coords.iter().flat_map(|p| [p.x, p.y]).collect()
    }
}

/// Exponentially correlated shadowing over the sensor positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowingField {
    covariance: SquareMatrix,
    cholesky_factor: SquareMatrix,
}

/// `C_jk = σ² · exp(−d(v_j, v_k) / d_c)`, factorized for sampling.
///
/// A failed factorization is retried once with `1e-8 · σ²` added to the
/// diagonal.
pub fn shadowing_covariance(
    layout: &SensorLayout,
    variance_db: f64,
    decorrelation_distance: f64,
) -> Result<ShadowingField> {
    if !(variance_db >= 0.0 && variance_db.is_finite()) {
        return Err(Error::invalid("sigma2", "must be >= 0"));
    }
    if !(decorrelation_distance > 0.0) {
        return Err(Error::invalid("dc", "must be > 0"));
    }
    let pos = layout.positions();
    let covariance = SquareMatrix::from_fn(pos.len(), |j, k| {
        variance_db * libm::exp(-pos[j].distance(pos[k]) / decorrelation_distance)
    });
    if variance_db == 0.0 {
        let n = pos.len();
        return Ok(ShadowingField { cholesky_factor: SquareMatrix::zeros(n), covariance });
    }
    let cholesky_factor = match linalg::cholesky(&covariance) {
        Some(l) => l,
        None => {
            let mut jittered = covariance.clone();
            jittered.add_diagonal(1e-8 * variance_db);
            linalg::cholesky(&jittered).ok_or_else(|| Error::NotPositiveDefinite {
                min_eigenvalue: linalg::symmetric_eigenvalues(&covariance)[0],
            })?
        }
    };
    Ok(ShadowingField { covariance, cholesky_factor })
}

impl ShadowingField {
    pub fn covariance(&self) -> &SquareMatrix {
        &self.covariance
    }

    pub fn cholesky_factor(&self) -> &SquareMatrix {
        &self.cholesky_factor
    }

    pub fn len(&self) -> usize {
        self.covariance.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One draw `L z` with `z` i.i.d. standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.len();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let l = self.cholesky_factor.as_slice();
        (0..n).map(|i| l[i * n..=i * n + i].iter().zip(&z).map(|(a, b)| a * b).sum()).collect()
    }
}

/// Received power at every sensor in dB, summing the transmitters in the
/// linear domain. `shadowing[i]` is the dB shadowing vector of transmitter
/// `i`; pass an empty slice for the noiseless channel.
pub fn received_power(
    txs: &TransmitterSet,
    layout: &SensorLayout,
    params: &PropagationParams,
    shadowing: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if !shadowing.is_empty() {
        if shadowing.len() != txs.len() {
            return Err(Error::DimensionMismatch {
                what: "shadowing vectors per transmitter",
                expected: txs.len(),
                found: shadowing.len(),
            });
        }
        if let Some(bad) = shadowing.iter().find(|s| s.len() != layout.len()) {
            return Err(Error::DimensionMismatch {
                what: "shadowing vector length",
                expected: layout.len(),
                found: bad.len(),
            });
        }
    }
    let mut linear = vec![0.0; layout.len()];
    for (i, tx) in txs.coords.iter().enumerate() {
        for (j, sensor) in layout.positions().iter().enumerate() {
            let mut p_db = params.path_power_db(tx.distance(*sensor));
            if let Some(n) = shadowing.get(i) {
                p_db += n[j];
            }
            linear[j] += db_to_linear(p_db);
        }
    }
    Ok(linear.into_iter().map(linear_to_db).collect())
}

/// Noiseless received power.
pub fn mean_received_power(txs: &TransmitterSet, layout: &SensorLayout, params: &PropagationParams) -> Vec<f64> {
    received_power(txs, layout, params, &[]).expect("noiseless channel has no shadowing to mismatch")
}

pub fn db_to_linear(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

/// dB value of a linear power, floored at the smallest positive normal so
/// the result stays finite.
pub fn linear_to_db(p: f64) -> f64 {
    10.0 * libm::log10(p.max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedSchedule;

    fn area(w: f64) -> Area {
        Area::square(w).unwrap()
    }

    #[test]
    fn grid_of_sixteen_on_twenty_meters() {
        let l = grid_layout(16, area(20.0)).unwrap();
        let coords = [2.5, 7.5, 12.5, 17.5];
        for p in l.positions() {
            assert!(coords.contains(&p.x) && coords.contains(&p.y));
        }
        assert_eq!(l.len(), 16);
        assert!((l.density() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn grid_degenerate_and_pitch() {
        let one = grid_layout(1, area(10.0)).unwrap();
        assert_eq!(one.positions(), &[Point2::new(5.0, 5.0)]);
        let nine = grid_layout(9, area(30.0)).unwrap();
        assert_eq!(nine.positions()[0], Point2::new(5.0, 5.0));
        assert_eq!(nine.positions()[1], Point2::new(15.0, 5.0));
        assert_eq!(nine.positions()[3], Point2::new(5.0, 15.0));
    }

    #[test]
    fn grid_rejects_non_square() {
        let err = grid_layout(15, area(20.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { name: "n_s", .. }));
        assert!(alloc::string::ToString::to_string(&err).contains("perfect-square"));
        assert!(grid_layout(0, area(20.0)).is_err());
    }

    #[test]
    fn layout_rejects_duplicates_and_outside() {
        let a = area(10.0);
        assert!(SensorLayout::new(vec![Point2::new(1.0, 1.0), Point2::new(1.0, 1.0)], a).is_err());
        assert!(SensorLayout::new(vec![Point2::new(11.0, 1.0)], a).is_err());
        assert!(SensorLayout::new(vec![], a).is_err());
    }

    #[test]
    fn covariance_entries() {
        let l = SensorLayout::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)], area(10.0)).unwrap();
        let f = shadowing_covariance(&l, 10.0, 1.0).unwrap();
        assert_eq!(f.covariance().get(0, 0), 10.0);
        assert!((f.covariance().get(0, 1) - 3.678_794_411_714_423).abs() < 1e-12);
        assert!(f.covariance().is_symmetric());

        let far = SensorLayout::new(vec![Point2::new(0.0, 0.0), Point2::new(1000.0, 0.0)], area(1000.0)).unwrap();
        let f = shadowing_covariance(&far, 10.0, 1.0).unwrap();
        assert!(f.covariance().get(0, 1) < 1e-300);
    }

    #[test]
    fn covariance_spectrum_nonnegative() {
        let l = grid_layout(36, area(30.0)).unwrap();
        let f = shadowing_covariance(&l, 10.0, 1.0).unwrap();
        let ev = linalg::symmetric_eigenvalues(f.covariance());
        assert!(ev[0] >= -1e-10 * 10.0);
    }

    #[test]
    fn zero_variance_draws_zero() {
        let l = grid_layout(4, area(10.0)).unwrap();
        let f = shadowing_covariance(&l, 0.0, 1.0).unwrap();
        let mut rng = SeedSchedule::new(1).stream("s", 0);
        assert!(f.sample(&mut rng).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reference_distance_identity_and_decade() {
        let p = PropagationParams { shadow_variance_db: 0.0, ..PropagationParams::indoor_defaults() };
        let l = SensorLayout::new(vec![Point2::new(0.0, 0.0)], area(20.0)).unwrap();
        let at_ref = mean_received_power(&TransmitterSet::new(vec![Point2::new(1.0, 0.0)]), &l, &p);
        assert!((at_ref[0] - p.ref_power_db).abs() < 1e-12);
        let decade = mean_received_power(&TransmitterSet::new(vec![Point2::new(10.0, 0.0)]), &l, &p);
        assert!((decade[0] - (p.ref_power_db - 32.3)).abs() < 1e-12);
    }

    #[test]
    fn colocated_pair_adds_three_db() {
        let p = PropagationParams::indoor_defaults();
        let l = grid_layout(4, area(10.0)).unwrap();
        let one = mean_received_power(&TransmitterSet::new(vec![Point2::new(3.0, 4.0)]), &l, &p);
        let two = mean_received_power(&TransmitterSet::new(vec![Point2::new(3.0, 4.0), Point2::new(3.0, 4.0)]), &l, &p);
        for (a, b) in one.iter().zip(&two) {
            // Brute-force: two equal linear terms.
            let expect = 10.0 * libm::log10(2.0 * libm::pow(10.0, a / 10.0));
            assert!((b - expect).abs() < 1e-12);
            assert!((b - a - 3.010_299_956_639_812).abs() < 1e-12);
        }
    }

    #[test]
    fn near_field_is_clamped() {
        let p = PropagationParams::indoor_defaults();
        let l = grid_layout(1, area(10.0)).unwrap();
        let on_top = mean_received_power(&TransmitterSet::new(vec![Point2::new(5.0, 5.0)]), &l, &p);
        assert_eq!(on_top[0], p.ref_power_db);
        assert!(on_top[0].is_finite());
    }

    #[test]
    fn shadowing_count_mismatch_is_rejected() {
        let p = PropagationParams::indoor_defaults();
        let l = grid_layout(4, area(10.0)).unwrap();
        let txs = TransmitterSet::new(vec![Point2::new(3.0, 4.0)]);
        assert!(received_power(&txs, &l, &p, &[vec![0.0; 4], vec![0.0; 4]]).is_err());
        assert!(received_power(&txs, &l, &p, &[vec![0.0; 3]]).is_err());
    }

    #[test]
    fn reference_power_from_free_space_loss() {
        let p = PropagationParams::indoor_defaults();
        assert!((free_space_path_loss_db(1.0, 2.4e9) - 40.052_008).abs() < 1e-6);
        assert!((p.ref_power_db + 20.052_008).abs() < 1e-6);
    }
}
