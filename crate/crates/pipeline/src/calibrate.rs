use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use segbench_core::geometry::{BoundingBox, Interpolation, Volume};
use segbench_core::metrics::{curve_csv, pr_roc_curves, select_threshold_max_f1, CurvePoint};
use segbench_core::segmentation::{crop_grid, roi_with_margin, run_predictor_with_hint, PredictorHandle, ROI_MARGIN_MM};
use serde::{Deserialize, Serialize};

use crate::manifest::{CaseEntry, CaseLoader, Manifest, Split};

pub const THRESHOLD_FILE: &str = "threshold.json";
pub const CURVE_FILE: &str = "curve_pr_roc.csv";
pub const SUMMARY_FILE: &str = "calibration_summary.csv";

/// Rows kept in the exported curve; the full curve has one row per distinct
/// score and can run to millions of rows.
pub const MAX_CURVE_ROWS: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Canonical predictor spec the threshold belongs to (without `tau`).
    pub predictor: String,
    pub threshold: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub auc_pr: f64,
    pub auc_roc: f64,
    pub n_cases: usize,
    pub n_voxels: usize,
    pub case_ids: Vec<String>,
}

impl Calibration {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// The ROI the pipeline uses for a case: the tumor box plus the standard
/// margin, clipped to the volume.
pub fn case_roi(v: &Volume, c: &CaseEntry) -> Result<BoundingBox> {
    roi_with_margin(&c.tumor_box, ROI_MARGIN_MM, &v.grid().extent())
        .with_context(|| format!("case {}: tumor box outside the volume", c.case_id))
}

/// Pooled `(probability, label)` pairs of one case, on the cropped original
/// grid.
fn case_scores(m: &Manifest, c: &CaseEntry, h: &PredictorHandle, loader: &CaseLoader) -> Result<Vec<(f64, bool)>> {
    let v = loader.volume(m, c)?;
    let gt = loader.ground_truth(m, c)?;
    let roi = case_roi(&v, c)?;
    let (p, _) = run_predictor_with_hint(h, &v, &roi, &c.tumor_box.center())
        .with_context(|| format!("case {}: predictor {h} failed", c.case_id))?;
    let target = crop_grid(v.grid(), &roi)?;
    let p = p.resample_onto(&target, Interpolation::Trilinear);
    let g = gt.resample_onto(&target);
    Ok(p.data().iter().copied().zip(g.data().iter().copied()).collect())
}

/// Selects the max-F1 threshold over every voxel of every validation case.
/// Only validation cases are loaded.
pub fn calibrate(
    m: &Manifest,
    h: &PredictorHandle,
    loader: &CaseLoader,
    pool: &rayon::ThreadPool,
) -> Result<(Calibration, Vec<CurvePoint>)> {
    let cases: Vec<&CaseEntry> = m.split(Split::Validation).collect();
    if cases.is_empty() {
        bail!("the manifest has no validation cases");
    }
    let per_case = pool.install(|| {
        cases
            .par_iter()
            .map(|c| case_scores(m, c, h, loader))
            .collect::<Result<Vec<_>>>()
    })?;
    let scores: Vec<(f64, bool)> = per_case.into_iter().flatten().collect();
    let curves = pr_roc_curves(&scores).context("validation labels must contain both classes")?;
    let best = *select_threshold_max_f1(&curves.points).context("empty curve")?;
    let predictor = without_tau(h)?.to_string();
    let cal = Calibration {
        predictor,
        threshold: best.threshold,
        f1: best.f1,
        precision: best.precision,
        recall: best.recall,
        auc_pr: curves.auc_pr,
        auc_roc: curves.auc_roc,
        n_cases: cases.len(),
        n_voxels: scores.len(),
        case_ids: cases.iter().map(|c| c.case_id.clone()).collect(),
    };
    Ok((cal, decimate(&curves.points, MAX_CURVE_ROWS, best.threshold)))
}

/// `h` with any `tau` parameter dropped, the key a calibration is stored
/// under.
pub fn without_tau(h: &PredictorHandle) -> Result<PredictorHandle> {
    let mut params = h.params().clone();
    params.remove("tau");
    Ok(PredictorHandle::new(h.kind(), params)?)
}

/// Evenly spaced rows of `points`, always keeping both ends and the row at
/// `keep`.
pub fn decimate(points: &[CurvePoint], max_rows: usize, keep: f64) -> Vec<CurvePoint> {
    if points.len() <= max_rows || max_rows < 2 {
        return points.to_vec();
    }
    let last = points.len() - 1;
    let mut idx: Vec<usize> = (0..max_rows).map(|i| i * last / (max_rows - 1)).collect();
    if let Some(k) = points.iter().position(|p| p.threshold == keep) {
        idx.push(k);
    }
    idx.sort_unstable();
    idx.dedup();
    idx.into_iter().map(|i| points[i]).collect()
}

pub fn write_calibration(out_dir: &Path, cal: &Calibration, curve: &[CurvePoint]) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let json = serde_json::to_string_pretty(cal)? + "\n";
    fs::write(out_dir.join(THRESHOLD_FILE), json)?;
    fs::write(out_dir.join(CURVE_FILE), curve_csv(curve))?;
    let summary = format!(
        "predictor,threshold,f1,precision,recall,auc_pr,auc_roc,n_cases,n_voxels\n\"{}\",{},{},{},{},{},{},{},{}\n",
        cal.predictor.replace('"', "\"\""),
        cal.threshold,
        cal.f1,
        cal.precision,
        cal.recall,
        cal.auc_pr,
        cal.auc_roc,
        cal.n_cases,
        cal.n_voxels
    );
    fs::write(out_dir.join(SUMMARY_FILE), summary)?;
    Ok(())
}
