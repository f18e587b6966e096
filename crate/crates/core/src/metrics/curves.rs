//! Voxelwise precision-recall and ROC curves, and max-F1 threshold selection.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    /// One point per distinct score, in decreasing threshold order.
    pub points: Vec<CurvePoint>,
    pub auc_pr: f64,
    pub auc_roc: f64,
}

/// Builds the curves from `(score, label)` pairs. A sample is predicted
/// positive at threshold `t` when `score >= t`; tied scores share one point.
pub fn pr_roc_curves(scores: &[(f64, bool)]) -> Result<Curves> {
    if let Some((s, _)) = scores.iter().find(|(s, _)| !s.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite score {s}")));
    }
    let pos = scores.iter().filter(|s| s.1).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));

    let (p, n) = (pos as f64, neg as f64);
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for group in sorted.chunk_by(|a, b| a.0 == b.0) {
        let gp = group.iter().filter(|s| s.1).count();
        tp += gp;
        fp += group.len() - gp;
        let (tpf, fpf) = (tp as f64, fp as f64);
        points.push(CurvePoint {
            threshold: group[0].0,
            precision: tpf / (tpf + fpf),
            recall: tpf / p,
            fpr: fpf / n,
            tpr: tpf / p,
            f1: 2.0 * tpf / (2.0 * tpf + fpf + (p - tpf)),
        });
    }

    let mut auc_roc = 0.0;
    let (mut x0, mut y0) = (0.0, 0.0);
    for pt in &points {
        auc_roc += (pt.fpr - x0) * (pt.tpr + y0) * 0.5;
        (x0, y0) = (pt.fpr, pt.tpr);
    }
    let mut auc_pr = 0.0;
    let (mut r0, mut p0) = (0.0, points[0].precision);
    for pt in &points {
        auc_pr += (pt.recall - r0) * (pt.precision + p0) * 0.5;
        (r0, p0) = (pt.recall, pt.precision);
    }
    Ok(Curves {
        points,
        auc_pr,
        auc_roc,
    })
}

/// The point of maximal F1; ties go to the larger threshold.
pub fn select_threshold_max_f1(curve: &[CurvePoint]) -> Option<&CurvePoint> {
    let mut best: Option<&CurvePoint> = None;
    for pt in curve {
        best = match best {
            Some(b) if pt.f1 < b.f1 || (pt.f1 == b.f1 && pt.threshold <= b.threshold) => Some(b),
            _ => Some(pt),
        };
    }
    best
}

pub const CURVE_CSV_HEADER: &str = "threshold,precision,recall,fpr,tpr,f1";

/// CSV text with one row per curve point.
pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::with_capacity(64 * (points.len() + 1));
    out.push_str(CURVE_CSV_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.threshold, p.precision, p.recall, p.fpr, p.tpr, p.f1
        );
    }
    out
}
