//! Experiment orchestration for multi-transmitter localization: config
//! files, artifact formats, the generate/train/evaluate/sweep pipeline and
//! CSV reports.

pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{LabError, Result};
pub use pipeline::{AlgoSet, Method};
