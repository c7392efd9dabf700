use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::linalg::{Lu, SquareMatrix};
use crate::propagation::SensorLayout;

/// Exponential covariance `sill · exp(−d / range)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceModel {
    pub sill: f64,
    pub range: f64,
}

impl CovarianceModel {
    pub fn new(sill: f64, range: f64) -> Result<Self> {
        if !(sill >= 0.0 && sill.is_finite()) {
            return Err(Error::invalid("sill", "must be >= 0"));
        }
        if !(range > 0.0 && range.is_finite()) {
            return Err(Error::invalid("range", "must be > 0"));
        }
        Ok(Self { sill, range })
    }

    /// Ordinary Kriging weights do not depend on the sill, so a zero sill
    /// (noiseless channel) is replaced by one to keep the system regular.
    fn effective_sill(&self) -> f64 {
        if self.sill > 0.0 {
            self.sill
        } else {
            1.0
        }
    }

    pub fn at(&self, d: f64) -> f64 {
        self.effective_sill() * libm::exp(-d / self.range)
    }
}

/// Ordinary Kriging predictor over a fixed set of sensor measurements.
#[derive(Debug, Clone)]
pub struct KrigingModel {
    sensors: Vec<Point2>,
    values: Vec<f64>,
    covariance: CovarianceModel,
    system: Lu,
    /// `A⁻¹ [z; 0]`, so that a prediction is `Σ α_j c_j(x) + α_n`.
    dual: Vec<f64>,
}

/// Factorizes `[C 1; 1ᵀ 0]` for the given sensors. A failed factorization is
/// retried once with `1e-8 · sill` added to the diagonal of `C`.
pub fn fit_kriging(layout: &SensorLayout, rss_db: &[f64], covariance: CovarianceModel) -> Result<KrigingModel> {
    fit_points(layout.positions(), rss_db, covariance)
}

pub fn fit_points(sensors: &[Point2], rss_db: &[f64], covariance: CovarianceModel) -> Result<KrigingModel> {
    let n = sensors.len();
    if n < 2 {
        return Err(Error::invalid("sensors", "ordinary Kriging needs at least two sensors"));
    }
    if rss_db.len() != n {
        return Err(Error::DimensionMismatch { what: "measurements per sensor", expected: n, found: rss_db.len() });
    }
    if rss_db.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("rss", "measurements must be finite"));
    }
    let build = |jitter: f64| {
        SquareMatrix::from_fn(n + 1, |i, j| match (i < n, j < n) {
            (true, true) => covariance.at(sensors[i].distance(sensors[j])) + if i == j { jitter } else { 0.0 },
            (false, false) => 0.0,
            _ => 1.0,
        })
    };
    let system = Lu::factor(&build(0.0), 1e-13)
        .or_else(|| Lu::factor(&build(1e-8 * covariance.effective_sill()), 1e-13))
        .ok_or(Error::Singular { what: "ordinary Kriging system" })?;
    let mut rhs = rss_db.to_vec();
    rhs.push(0.0);
    let dual = system.solve(&rhs);
    Ok(KrigingModel { sensors: sensors.to_vec(), values: rss_db.to_vec(), covariance, system, dual })
}

impl KrigingModel {
    pub fn covariance(&self) -> CovarianceModel {
        self.covariance
    }

    pub fn sensors(&self) -> &[Point2] {
        &self.sensors
    }

    /// Kriging weights at `x` and the Lagrange multiplier.
    pub fn weights_at(&self, x: Point2) -> (Vec<f64>, f64) {
        let mut rhs: Vec<f64> = self.sensors.iter().map(|s| self.covariance.at(s.distance(x))).collect();
        rhs.push(1.0);
        let mut sol = self.system.solve(&rhs);
        let mu = sol.pop().unwrap_or(0.0);
        (sol, mu)
    }

    /// Prediction through explicit weights; slower than [`KrigingModel::predict`].
    pub fn predict_with_weights(&self, x: Point2) -> f64 {
        let (w, _) = self.weights_at(x);
        w.iter().zip(&self.values).map(|(a, b)| a * b).sum()
    }

    pub fn predict(&self, x: Point2) -> f64 {
        let n = self.sensors.len();
        let mut acc = self.dual[n];
        for (s, a) in self.sensors.iter().zip(&self.dual) {
            acc += a * self.covariance.at(s.distance(x));
        }
        acc
    }
}
