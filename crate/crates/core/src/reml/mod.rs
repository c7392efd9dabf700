//! Radio-environment-map localization: ordinary Kriging of the sensor RSS
//! onto a pixel grid, then the strongest pixel (one transmitter) or the
//! strongest pixel of every thresholded region (several transmitters).

mod kriging;
mod map;
mod segment;

pub use kriging::{fit_kriging, fit_points, CovarianceModel, KrigingModel};
pub use map::{build_rem, RadioMap};
pub use segment::{
    label_regions, localize_multi, localize_regions, min_region_pixels, otsu_bin, otsu_threshold, threshold_segment,
    Region, HISTOGRAM_BINS,
};

use crate::error::Result;
use crate::geometry::Point2;
use crate::propagation::{PropagationParams, SensorLayout, TransmitterSet};

/// `K · N_s · log₂(N_s)`.
pub fn reml_complexity(pixels: u64, n_s: u64) -> f64 {
    pixels as f64 * n_s as f64 * libm::log2(n_s as f64)
}

/// Map resolution and Kriging covariance for one deployment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemlLocalizer {
    pub resolution: f64,
    pub covariance: CovarianceModel,
    pub min_region: usize,
}

impl RemlLocalizer {
    /// Uses the generative shadowing statistics as the Kriging covariance.
    pub fn from_channel(params: &PropagationParams, resolution: f64) -> Result<Self> {
        Ok(Self {
            resolution,
            covariance: CovarianceModel::new(params.shadow_variance_db, params.decorrelation_distance)?,
            min_region: min_region_pixels(params.decorrelation_distance, resolution),
        })
    }

    pub fn map(&self, layout: &SensorLayout, rss: &[f64]) -> Result<RadioMap> {
        let model = fit_kriging(layout, rss, self.covariance)?;
        build_rem(&model, layout.area(), self.resolution)
    }

    pub fn localize_single(&self, layout: &SensorLayout, rss: &[f64]) -> Result<Point2> {
        Ok(self.map(layout, rss)?.argmax_pixel())
    }

    pub fn localize_multi(&self, layout: &SensorLayout, rss: &[f64]) -> Result<TransmitterSet> {
        Ok(localize_multi(&self.map(layout, rss)?, self.min_region))
    }
}
