//! Blind localization of several simultaneously active transmitters from
//! received-signal-strength measurements of a fixed sensor grid.
//!
//! The crate holds the algorithmic core and is `no_std` (it needs `alloc`):
//!
//! - [`propagation`]: log-distance path loss, exponentially correlated
//!   log-normal shadowing, linear-domain superposition.
//! - [`datasets`]: scenario sampling, label ordering, splitting and
//!   normalization.
//! - [`mlp`]: fully connected ELU network trained with Adam, used both as the
//!   transmitter-count classifier and as the per-count coordinate regressor.
//! - [`reml`]: ordinary-Kriging radio maps with argmax / threshold-and-segment
//!   localization.
//! - [`particlesim`]: force-driven particle localization.
//! - [`eval`]: matching, CDFs, RMSE, confusion matrices and baselines.
//!
//! Every random draw comes from a named sub-stream of a [`rng::SeedSchedule`],
//! so results are a pure function of inputs and the base seed.

#![no_std]

extern crate alloc;

pub mod datasets;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod linalg;
pub mod mlp;
pub mod particlesim;
pub mod propagation;
pub mod reml;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{Area, Point2};
pub use propagation::{PropagationParams, SensorLayout, TransmitterSet};
pub use rng::{SeedSchedule, StreamRng};
