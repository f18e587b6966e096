use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use segbench_core::stats::SummaryQuartiles;

use crate::evaluate::{StudyReport, METRICS};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";
pub const CASES_CSV: &str = "cases.csv";
pub const SIGNIFICANCE_CSV: &str = "significance.csv";
pub const TIMING_CSV: &str = "timing.csv";
pub const TIMING_TXT: &str = "timing.txt";

/// Files whose bytes depend only on the manifest, seeds and predictors.
pub const DETERMINISTIC_FILES: [&str; 5] = [REPORT_JSON, REPORT_TXT, REPORT_CSV, CASES_CSV, SIGNIFICANCE_CSV];

const TIMING_NOTE: &str = "Batch timing measures compute only (predictor dispatch to final mask). \
It is not comparable with timings that include user interaction.";

fn metric_title(metric: &str) -> &str {
    match metric {
        "dice" => "DSC",
        "precision" => "Precision",
        "recall" => "Recall",
        "rvd" => "RVD",
        "hd95_mm" => "HD95 (mm)",
        other => other,
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_p(p: f64) -> String {
    if p < 1e-4 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

fn quartile_cells(q: Option<&SummaryQuartiles>) -> [String; 3] {
    match q {
        Some(q) => [q.q25, q.median, q.q75].map(|v| format!("{v:.3}")),
        None => ["-".into(), "-".into(), "-".into()],
    }
}

/// Aligned text table with 25% / Med. / 75% columns per method, followed by
/// detection counts, failures and the significance table.
pub fn render_text(r: &StudyReport) -> String {
    const W: usize = 8;
    let label_w = 12;
    let group_w = 3 * W;
    let mut out = String::new();
    let _ = writeln!(out, "Split: {} ({} cases)", r.split, r.n_cases);
    for m in &r.methods {
        let _ = writeln!(out, "  {}: {} (threshold {} from {})", m.label, m.predictor, m.threshold, m.threshold_source);
    }
    out.push('\n');

    let _ = write!(out, "{:<label_w$}", "");
    for m in &r.methods {
        let _ = write!(out, " | {:^group_w$}", m.label);
    }
    out.push('\n');
    let _ = write!(out, "{:<label_w$}", "Metric");
    for _ in &r.methods {
        let _ = write!(out, " | {:>W$}{:>W$}{:>W$}", "25%", "Med.", "75%");
    }
    out.push('\n');
    let _ = writeln!(out, "{}", "-".repeat(label_w + r.methods.len() * (group_w + 3)));
    for metric in METRICS {
        let _ = write!(out, "{:<label_w$}", metric_title(metric));
        for m in &r.methods {
            let [a, b, c] = quartile_cells(m.quartiles.get(metric).and_then(Option::as_ref));
            let _ = write!(out, " | {a:>W$}{b:>W$}{c:>W$}");
        }
        out.push('\n');
    }
    out.push('\n');
    for m in &r.methods {
        let _ = writeln!(
            out,
            "{}: detected {}/{} (sensitivity {:.3}), failures {}",
            m.label, m.n_detected, m.n_cases, m.sensitivity, m.n_failed
        );
    }
    let failures: Vec<_> = r.cases.iter().filter(|c| c.error.is_some()).collect();
    if !failures.is_empty() {
        out.push_str("\nFailed cases (scored as misses):\n");
        for c in failures {
            let _ = writeln!(out, "  {} {}: {}", c.method, c.case_id, c.error.as_deref().unwrap_or_default());
        }
    }
    if !r.significance.is_empty() {
        let alpha_adj = r.significance[0].alpha_adj;
        let _ = writeln!(
            out,
            "\nWilcoxon signed-rank (two-sided), alpha {} / {} comparisons = {:.4}",
            r.alpha, r.n_comparisons, alpha_adj
        );
        let _ = writeln!(out, "{:<12} {:<36} {:>5} {:>10}  significant", "Metric", "Comparison", "n", "p");
        for s in &r.significance {
            let cmp = format!("{} vs {}", s.method_a, s.method_b);
            let p = s.p_value.map(fmt_p).unwrap_or_else(|| "-".into());
            let sig = if s.significant { "yes" } else { "no" };
            let _ = writeln!(out, "{:<12} {:<36} {:>5} {:>10}  {sig}", metric_title(&s.metric), cmp, s.n_pairs, p);
        }
    }
    let _ = writeln!(out, "\nTiming is reported separately in {TIMING_TXT}.");
    out
}

pub fn render_summary_csv(r: &StudyReport) -> String {
    let mut out = String::from("method,metric,n,q25,median,q75\n");
    for m in &r.methods {
        for metric in METRICS {
            let n = r.cases_of(&m.label).filter(|c| c.value(metric).is_some()).count();
            let q = m.quartiles.get(metric).and_then(Option::as_ref);
            let _ = writeln!(
                out,
                "{},{metric},{n},{},{},{}",
                csv_field(&m.label),
                opt(q.map(|q| q.q25)),
                opt(q.map(|q| q.median)),
                opt(q.map(|q| q.q75))
            );
        }
        let _ = writeln!(out, "{},sensitivity,{},,{},", csv_field(&m.label), m.n_cases, m.sensitivity);
    }
    out
}

pub fn render_cases_csv(r: &StudyReport) -> String {
    let mut out = String::from("case_id,method,dice,precision,recall,rvd,hd95_mm,detected,precision_undefined,error\n");
    for c in &r.cases {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_field(&c.case_id),
            csv_field(&c.method),
            c.dice,
            c.precision,
            c.recall,
            c.rvd,
            opt(c.hd95_mm),
            c.detected,
            c.precision_undefined,
            csv_field(c.error.as_deref().unwrap_or_default())
        );
    }
    out
}

pub fn render_significance_csv(r: &StudyReport) -> String {
    let mut out = String::from("metric,method_a,method_b,n_pairs,p_value,alpha_adj,significant\n");
    for s in &r.significance {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.metric,
            csv_field(&s.method_a),
            csv_field(&s.method_b),
            s.n_pairs,
            opt(s.p_value),
            s.alpha_adj,
            s.significant
        );
    }
    out
}

pub fn render_timing_csv(r: &StudyReport) -> String {
    let mut out = String::from("case_id,method,elapsed_s\n");
    for t in &r.timing {
        let _ = writeln!(out, "{},{},{}", csv_field(&t.case_id), csv_field(&t.method), t.elapsed_s);
    }
    out
}

pub fn render_timing_text(r: &StudyReport) -> String {
    let mut out = format!("{TIMING_NOTE}\n\n{:<24} {:>10} {:>10} {:>10}\n", "Method", "25% (s)", "Med. (s)", "75% (s)");
    for m in &r.methods {
        let [a, b, c] = match r.time_quartiles(&m.label) {
            Some(q) => [q.q25, q.median, q.q75].map(|v| format!("{v:.3}")),
            None => ["-".into(), "-".into(), "-".into()],
        };
        let _ = writeln!(out, "{:<24} {a:>10} {b:>10} {c:>10}", m.label);
    }
    out
}

/// Writes the deterministic report files and, if the report carries timing,
/// the timing files.
pub fn write_report(out_dir: &Path, r: &StudyReport) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let write = |name: &str, text: String| -> Result<()> {
        let p = out_dir.join(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    };
    write(REPORT_JSON, serde_json::to_string_pretty(r)? + "\n")?;
    write(REPORT_TXT, render_text(r))?;
    write(REPORT_CSV, render_summary_csv(r))?;
    write(CASES_CSV, render_cases_csv(r))?;
    write(SIGNIFICANCE_CSV, render_significance_csv(r))?;
    if !r.timing.is_empty() {
        write(TIMING_CSV, render_timing_csv(r))?;
        write(TIMING_TXT, render_timing_text(r))?;
    }
    Ok(())
}

pub fn read_report(path: &Path) -> Result<StudyReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
