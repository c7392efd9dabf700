use alloc::format;
use alloc::vec::Vec;

use super::kriging::KrigingModel;
use crate::error::{Error, Result};
use crate::geometry::{Area, Point2};

/// Interpolated RSS over a pixel grid anchored at the area origin.
///
/// Pixel `(i, j)` covers `[iR, (i+1)R] × [jR, (j+1)R]`; `i` runs along the
/// width. Values are stored row-major with `i` as the row index.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioMap {
    values: Vec<f64>,
    width_px: usize,
    height_px: usize,
    resolution: f64,
}

fn pixel_count(extent: f64, resolution: f64, name: &'static str) -> Result<usize> {
    let count = libm::round(extent / resolution);
    if count < 1.0 || libm::fabs(count * resolution - extent) > 1e-9 * extent.max(1.0) {
        return Err(Error::invalid(
            name,
            format!("{extent} m is not a positive multiple of the resolution {resolution} m"),
        ));
    }
    Ok(count as usize)
}

impl RadioMap {
    pub fn from_values(values: Vec<f64>, width_px: usize, height_px: usize, resolution: f64) -> Result<Self> {
        if values.len() != width_px * height_px || values.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "radio map pixels",
                expected: width_px * height_px,
                found: values.len(),
            });
        }
        if !(resolution > 0.0) {
            return Err(Error::invalid("resolution", "must be > 0"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("radio map", "values must be finite"));
        }
        Ok(Self { values, width_px, height_px, resolution })
    }

    pub fn width_px(&self) -> usize {
        self.width_px
    }

    pub fn height_px(&self) -> usize {
        self.height_px
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn pixel_count(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.height_px + j]
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.height_px + j
    }

    pub fn pixel_of(&self, index: usize) -> (usize, usize) {
        (index / self.height_px, index % self.height_px)
    }

    pub fn pixel_center(&self, i: usize, j: usize) -> Point2 {
        Point2::new((i as f64 + 0.5) * self.resolution, (j as f64 + 0.5) * self.resolution)
    }

    pub fn center_of_index(&self, index: usize) -> Point2 {
        let (i, j) = self.pixel_of(index);
        self.pixel_center(i, j)
    }

    /// Pixel-center coordinate of the largest value; ties go to the smallest
    /// row-major index.
    pub fn argmax_pixel(&self) -> Point2 {
        self.center_of_index(argmax_index(&self.values, 0..self.values.len()))
    }
}

pub(crate) fn argmax_index(values: &[f64], indices: impl IntoIterator<Item = usize>) -> usize {
    let mut it = indices.into_iter();
    let mut best = it.next().expect("argmax over an empty pixel set");
    for i in it {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}

/// Kriging prediction at every pixel center. `A_w / R` and `A_h / R` must be
/// integers.
pub fn build_rem(model: &KrigingModel, area: Area, resolution: f64) -> Result<RadioMap> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::invalid("resolution", "must be > 0"));
    }
    let width_px = pixel_count(area.width, resolution, "area width")?;
    let height_px = pixel_count(area.height, resolution, "area height")?;
    let mut values = Vec::with_capacity(width_px * height_px);
    for i in 0..width_px {
        for j in 0..height_px {
            let c = Point2::new((i as f64 + 0.5) * resolution, (j as f64 + 0.5) * resolution);
            values.push(model.predict(c));
        }
    }
    Ok(RadioMap { values, width_px, height_px, resolution })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reml::kriging::{fit_points, CovarianceModel};
    use alloc::vec;

    #[test]
    fn pixel_arithmetic() {
        let mut values = vec![0.0; 200 * 200];
        values[50 * 200 + 70] = 1.0;
        let m = RadioMap::from_values(values, 200, 200, 0.1).unwrap();
        let p = m.argmax_pixel();
        assert!((p.x - 5.05).abs() < 1e-12 && (p.y - 7.05).abs() < 1e-12);
        let flat = RadioMap::from_values(vec![3.0; 12], 3, 4, 1.0).unwrap();
        assert_eq!(flat.argmax_pixel(), Point2::new(0.5, 0.5));
    }

    #[test]
    fn build_dimensions_and_divisibility() {
        let sensors = [Point2::new(5.0, 5.0), Point2::new(15.0, 15.0)];
        let model = fit_points(&sensors, &[-40.0, -40.0], CovarianceModel::new(10.0, 1.0).unwrap()).unwrap();
        let map = build_rem(&model, Area::square(20.0).unwrap(), 0.1).unwrap();
        assert_eq!((map.width_px(), map.height_px(), map.pixel_count()), (200, 200, 40_000));
        assert!(map.values().iter().all(|v| (v + 40.0).abs() < 1e-9));
        assert!(build_rem(&model, Area::square(20.0).unwrap(), 0.3).is_err());

        let one = build_rem(&model, Area::square(1.0).unwrap(), 1.0).unwrap();
        assert_eq!(one.pixel_count(), 1);
        assert_eq!(one.get(0, 0), model.predict(Point2::new(0.5, 0.5)));
    }
}
