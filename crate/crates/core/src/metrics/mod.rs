//! Overlap and distance metrics, voxelwise curves and threshold selection.

mod curves;
mod distance;
mod overlap;

pub use curves::{curve_csv, pr_roc_curves, select_threshold_max_f1, CurvePoint, Curves, CURVE_CSV_HEADER};
pub use distance::{boundary, hd95, squared_distance_transform};
pub use overlap::{dice, lesion_detected, precision_recall, rvd, CaseMetrics, PrecisionRecall, DETECTION_DICE};
