use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use segbench_core::metrics::CaseMetrics;
use segbench_core::segmentation::{crop_grid, segment, PredictorHandle, DEFAULT_THRESHOLD};
use segbench_core::stats::{quartiles, significance_report, MethodTable, SignificanceRow, SummaryQuartiles, WilcoxonMode};
use serde::{Deserialize, Serialize};

use crate::calibrate::{case_roi, without_tau, Calibration};
use crate::manifest::{CaseEntry, CaseLoader, Manifest, Split};

/// Metric names in report order.
pub const METRICS: [&str; 5] = ["dice", "precision", "recall", "rvd", "hd95_mm"];

/// A predictor under evaluation with its display label and threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct Method {
    pub label: String,
    pub handle: PredictorHandle,
    pub tau: f64,
    /// Where `tau` came from: "spec", "calibration", "cli", "binary" or
    /// "default".
    pub tau_source: &'static str,
}

/// Threshold supplied on the command line.
#[derive(Clone, Debug)]
pub enum ThresholdArg {
    Value(f64),
    Calibrated(Calibration),
}

/// Splits an optional `label=` prefix off a predictor argument. A prefix is
/// recognised only when the text before the first `=` contains no `:`.
pub fn split_label(arg: &str) -> (Option<&str>, &str) {
    match arg.split_once('=') {
        Some((label, spec)) if !label.contains(':') && !label.is_empty() => (Some(label), spec),
        _ => (None, arg),
    }
}

/// Parses `[label=]spec` arguments and resolves each method's threshold: an
/// explicit `tau` in the spec wins, then a calibration for the same
/// predictor, then a plain `--threshold` value, then 0.5.
pub fn resolve_methods(args: &[String], threshold: Option<&ThresholdArg>) -> Result<Vec<Method>> {
    let mut out: Vec<Method> = Vec::new();
    for arg in args {
        let (label, spec) = split_label(arg);
        let handle: PredictorHandle = spec.parse().with_context(|| format!("predictor {spec:?}"))?;
        let mut label = label.map(str::to_owned).unwrap_or_else(|| handle.kind().as_str().to_owned());
        if out.iter().any(|m| m.label == label) {
            let base = label.clone();
            let mut n = 2;
            while out.iter().any(|m| m.label == label) {
                label = format!("{base}#{n}");
                n += 1;
            }
        }
        let (tau, tau_source) = if let Some(t) = handle.tau() {
            (t, "spec")
        } else if handle.is_binary() {
            (DEFAULT_THRESHOLD, "binary")
        } else {
            match threshold {
                Some(ThresholdArg::Calibrated(c)) if c.predictor == without_tau(&handle)?.to_string() => {
                    (c.threshold, "calibration")
                }
                Some(ThresholdArg::Value(t)) => (*t, "cli"),
                _ => (DEFAULT_THRESHOLD, "default"),
            }
        };
        if !(0.0..=1.0).contains(&tau) {
            bail!("threshold {tau} for {label} is outside [0, 1]");
        }
        out.push(Method {
            label,
            handle,
            tau,
            tau_source,
        });
    }
    if out.is_empty() {
        bail!("no predictors given");
    }
    Ok(out)
}

/// Outcome of one method on one case.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseOutcome {
    pub case_id: String,
    pub method: String,
    pub metrics: CaseMetrics,
    pub error: Option<String>,
}

/// Per-case record as written to `report.json` (timing lives elsewhere).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub method: String,
    pub dice: f64,
    pub precision: f64,
    pub recall: f64,
    pub rvd: f64,
    pub hd95_mm: Option<f64>,
    pub detected: bool,
    pub precision_undefined: bool,
    pub error: Option<String>,
}

impl CaseRecord {
    pub fn value(&self, metric: &str) -> Option<f64> {
        match metric {
            "dice" => Some(self.dice),
            "precision" => Some(self.precision),
            "recall" => Some(self.recall),
            "rvd" => Some(self.rvd),
            "hd95_mm" => self.hd95_mm,
            _ => None,
        }
    }
}

impl From<&CaseOutcome> for CaseRecord {
    fn from(o: &CaseOutcome) -> Self {
        let m = &o.metrics;
        CaseRecord {
            case_id: o.case_id.clone(),
            method: o.method.clone(),
            dice: m.dice,
            precision: m.precision,
            recall: m.recall,
            rvd: m.rvd,
            hd95_mm: m.hd95_mm,
            detected: m.detected,
            precision_undefined: m.precision_undefined,
            error: o.error.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub predictor: String,
    pub threshold: f64,
    pub threshold_source: String,
    pub n_cases: usize,
    pub n_failed: usize,
    pub n_detected: usize,
    /// Fraction of cases with a detected lesion.
    pub sensitivity: f64,
    /// Quartiles per metric; `None` when no case has a defined value.
    pub quartiles: BTreeMap<String, Option<SummaryQuartiles>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub case_id: String,
    pub method: String,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub split: String,
    pub n_cases: usize,
    pub alpha: f64,
    pub n_comparisons: usize,
    pub methods: Vec<MethodSummary>,
    pub cases: Vec<CaseRecord>,
    pub significance: Vec<SignificanceRow>,
    /// Wall-clock seconds per case; kept out of `report.json` so reruns
    /// produce identical files.
    #[serde(skip)]
    pub timing: Vec<TimingRecord>,
}

impl StudyReport {
    pub fn n_failures(&self) -> usize {
        self.methods.iter().map(|m| m.n_failed).sum()
    }

    pub fn method(&self, label: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.label == label)
    }

    pub fn cases_of<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a CaseRecord> + 'a {
        self.cases.iter().filter(move |c| c.method == label)
    }

    /// Quartiles of per-case elapsed seconds for one method.
    pub fn time_quartiles(&self, label: &str) -> Option<SummaryQuartiles> {
        let t: Vec<f64> = self
            .timing
            .iter()
            .filter(|r| r.method == label)
            .map(|r| r.elapsed_s)
            .collect();
        quartiles(&t).ok()
    }
}

fn run_case(m: &Manifest, c: &CaseEntry, methods: &[Method], loader: &CaseLoader) -> Vec<CaseOutcome> {
    let start = Instant::now();
    let loaded = loader
        .volume(m, c)
        .and_then(|v| Ok((loader.ground_truth(m, c)?, v)))
        .and_then(|(gt, v)| {
            let roi = case_roi(&v, c)?;
            let target = crop_grid(v.grid(), &roi)?;
            Ok((v, gt.resample_onto(&target), roi))
        });
    let (v, gt, roi) = match loaded {
        Ok(x) => x,
        Err(e) => {
            let elapsed = start.elapsed().as_secs_f64();
            return methods
                .iter()
                .map(|meth| CaseOutcome {
                    case_id: c.case_id.clone(),
                    method: meth.label.clone(),
                    metrics: CaseMetrics::miss(elapsed),
                    error: Some(format!("{e:#}")),
                })
                .collect();
        }
    };
    let hint = c.tumor_box.center();
    methods
        .iter()
        .map(|meth| {
            let t0 = Instant::now();
            let result = segment(&meth.handle, &v, &roi, &hint, meth.tau)
                .and_then(|s| CaseMetrics::compute(&s.mask, &gt, s.elapsed_s));
            let (metrics, error) = match result {
                Ok(cm) => (cm, None),
                Err(e) => {
                    tracing::warn!(case = %c.case_id, method = %meth.label, "case failed: {e}");
                    (CaseMetrics::miss(t0.elapsed().as_secs_f64()), Some(e.to_string()))
                }
            };
            CaseOutcome {
                case_id: c.case_id.clone(),
                method: meth.label.clone(),
                metrics,
                error,
            }
        })
        .collect()
}

/// Runs every method on every case of `split` and assembles the report.
/// Case failures are scored as misses and listed, never aborting the run.
pub fn evaluate(
    m: &Manifest,
    split: Split,
    methods: &[Method],
    loader: &CaseLoader,
    pool: &rayon::ThreadPool,
    alpha: f64,
) -> Result<StudyReport> {
    let cases: Vec<&CaseEntry> = m.split(split).collect();
    if cases.is_empty() {
        bail!("the manifest has no {split} cases");
    }
    let outcomes: Vec<CaseOutcome> = pool.install(|| {
        cases
            .par_iter()
            .map(|c| run_case(m, c, methods, loader))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    assemble(split, methods, &outcomes, alpha)
}

/// Builds the report from per-case outcomes in case-major order.
pub fn assemble(split: Split, methods: &[Method], outcomes: &[CaseOutcome], alpha: f64) -> Result<StudyReport> {
    let cases: Vec<CaseRecord> = outcomes.iter().map(CaseRecord::from).collect();
    let n_cases = outcomes.len() / methods.len().max(1);
    let mut summaries = Vec::new();
    for meth in methods {
        let rows: Vec<&CaseRecord> = cases.iter().filter(|c| c.method == meth.label).collect();
        let mut q = BTreeMap::new();
        for metric in METRICS {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r.value(metric)).collect();
            q.insert(metric.to_owned(), quartiles(&vals).ok());
        }
        let n_detected = rows.iter().filter(|r| r.detected).count();
        summaries.push(MethodSummary {
            label: meth.label.clone(),
            predictor: meth.handle.to_string(),
            threshold: meth.tau,
            threshold_source: meth.tau_source.to_owned(),
            n_cases: rows.len(),
            n_failed: rows.iter().filter(|r| r.error.is_some()).count(),
            n_detected,
            sensitivity: if rows.is_empty() { 0.0 } else { n_detected as f64 / rows.len() as f64 },
            quartiles: q,
        });
    }
    let k = methods.len();
    let n_comparisons = k * k.saturating_sub(1) / 2;
    let mut significance = Vec::new();
    if n_comparisons > 0 {
        for metric in METRICS {
            let tables: Vec<MethodTable> = methods
                .iter()
                .map(|meth| MethodTable {
                    method: meth.label.clone(),
                    values: cases
                        .iter()
                        .filter(|c| c.method == meth.label)
                        .map(|c| (c.case_id.clone(), c.value(metric)))
                        .collect(),
                })
                .collect();
            significance.extend(significance_report(metric, &tables, alpha, n_comparisons, WilcoxonMode::Auto)?);
        }
    }
    Ok(StudyReport {
        split: split.to_string(),
        n_cases,
        alpha,
        n_comparisons,
        methods: summaries,
        cases,
        significance,
        timing: outcomes
            .iter()
            .map(|o| TimingRecord {
                case_id: o.case_id.clone(),
                method: o.method.clone(),
                elapsed_s: o.metrics.elapsed_s,
            })
            .collect(),
    })
}
