//! Batch side of segbench: phantom dataset generation, validation-only
//! threshold calibration, multi-method evaluation and report rendering.

pub mod calibrate;
pub mod dataset;
pub mod evaluate;
pub mod manifest;
pub mod report;
pub mod stub;

pub use calibrate::{calibrate, write_calibration, Calibration};
pub use dataset::{make_dataset, DatasetSpec};
pub use evaluate::{evaluate, resolve_methods, Method, StudyReport, ThresholdArg};
pub use manifest::{CaseEntry, CaseLoader, Manifest, Split};
pub use report::write_report;

/// Thread pool with `workers` threads (0 = one per core).
pub fn thread_pool(workers: usize) -> anyhow::Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}
