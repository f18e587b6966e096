use serde::{Deserialize, Serialize};

use super::distance::hd95;
use crate::error::{Error, Result};
use crate::geometry::Mask;

/// Threshold on the Dice coefficient above which a lesion counts as detected.
pub const DETECTION_DICE: f64 = 0.5;

fn overlap_counts(pred: &Mask, gt: &Mask) -> Result<(usize, usize, usize)> {
    pred.grid().ensure_matches(gt.grid())?;
    let inter = pred
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(a, b)| **a && **b)
        .count();
    Ok((inter, pred.count(), gt.count()))
}

/// `2|P∩G| / (|P| + |G|)`; 1 when both masks are empty.
pub fn dice(pred: &Mask, gt: &Mask) -> Result<f64> {
    let (inter, p, g) = overlap_counts(pred, gt)?;
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (p + g) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    /// Set when the prediction is empty: precision is undefined and reported
    /// as 0.
    pub precision_undefined: bool,
}

pub fn precision_recall(pred: &Mask, gt: &Mask) -> Result<PrecisionRecall> {
    let (inter, p, g) = overlap_counts(pred, gt)?;
    if g == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    Ok(PrecisionRecall {
        precision: if p == 0 { 0.0 } else { inter as f64 / p as f64 },
        recall: inter as f64 / g as f64,
        precision_undefined: p == 0,
    })
}

/// Unsigned relative volume difference `|V_P - V_G| / V_G`.
pub fn rvd(pred: &Mask, gt: &Mask) -> Result<f64> {
    pred.grid().ensure_matches(gt.grid())?;
    // Both masks share the grid, so the voxel volume cancels.
    let (np, ng) = (pred.count(), gt.count());
    if ng == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    Ok(np.abs_diff(ng) as f64 / ng as f64)
}

pub fn lesion_detected(pred: &Mask, gt: &Mask) -> Result<bool> {
    Ok(dice(pred, gt)? > DETECTION_DICE)
}

/// Per-case evaluation record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub dice: f64,
    pub precision: f64,
    pub recall: f64,
    pub rvd: f64,
    /// `None` when either mask is empty.
    pub hd95_mm: Option<f64>,
    pub detected: bool,
    pub elapsed_s: f64,
    #[serde(default)]
    pub precision_undefined: bool,
}

impl CaseMetrics {
    pub fn compute(pred: &Mask, gt: &Mask, elapsed_s: f64) -> Result<CaseMetrics> {
        let d = dice(pred, gt)?;
        let pr = precision_recall(pred, gt)?;
        Ok(CaseMetrics {
            dice: d,
            precision: pr.precision,
            recall: pr.recall,
            rvd: rvd(pred, gt)?,
            hd95_mm: hd95(pred, gt)?,
            detected: d > DETECTION_DICE,
            elapsed_s,
            precision_undefined: pr.precision_undefined,
        })
    }

    /// Scores of a case that produced no segmentation.
    pub fn miss(elapsed_s: f64) -> CaseMetrics {
        CaseMetrics {
            dice: 0.0,
            precision: 0.0,
            recall: 0.0,
            rvd: 1.0,
            hd95_mm: None,
            detected: false,
            elapsed_s,
            precision_undefined: true,
        }
    }
}
