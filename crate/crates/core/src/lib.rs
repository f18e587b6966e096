//! Core library of the segbench workbench: volumes and grids, tracked-sweep
//! reconstruction, synthetic liver phantoms, tumor segmentation strategies,
//! evaluation metrics and paired statistics.

pub mod error;
pub mod geometry;
pub mod metrics;
pub mod phantom;
pub mod reconstruction;
pub mod segmentation;
pub mod stats;

pub use error::{Error, Result};
