//! Summary quartiles and paired significance testing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest sample size for which `auto` mode uses the exact distribution.
pub const EXACT_MAX_N: usize = 20;

/// Percentile `p` (0..=100) of an ascending slice, linearly interpolating
/// between order statistics at rank `p/100 * (n - 1)`.
///
/// # Panics
///
/// Panics on an empty slice.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty list");
    let rank = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryQuartiles {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

pub fn quartiles(values: &[f64]) -> Result<SummaryQuartiles> {
    if values.is_empty() {
        return Err(Error::InvalidInput("quartiles of an empty list".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("quartiles of non-finite values".into()));
    }
    let mut s = values.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    Ok(SummaryQuartiles {
        q25: percentile_sorted(&s, 25.0),
        median: percentile_sorted(&s, 50.0),
        q75: percentile_sorted(&s, 75.0),
    })
}

pub fn bonferroni(alpha: f64, n_comparisons: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")));
    }
    if n_comparisons == 0 {
        return Err(Error::InvalidParameter("at least one comparison is required".into()));
    }
    Ok(alpha / n_comparisons as f64)
}

// =============================================================================
// Wilcoxon signed-rank test
// =============================================================================

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMode {
    Exact,
    Approx,
    #[default]
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Two-sided p-value.
    pub p_value: f64,
    /// Sum of ranks of the positive differences.
    pub w_plus: f64,
    /// Number of nonzero differences.
    pub n: usize,
    pub exact: bool,
}

/// Mid-ranks (1-based) of `values`.
fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their average
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Two-sided Wilcoxon signed-rank test on paired samples `a` and `b`.
/// Zero differences are dropped and tied magnitudes get mid-ranks.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], mode: WilcoxonMode) -> Result<WilcoxonResult> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidInput(format!(
            "paired samples need equal nonzero lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|&v| v != 0.0).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite paired difference".into()));
    }
    if d.is_empty() {
        return Err(Error::AllZeroDifferences);
    }
    let n = d.len();
    let ranks = mid_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();

    let exact = match mode {
        WilcoxonMode::Exact => true,
        WilcoxonMode::Approx => false,
        WilcoxonMode::Auto => n <= EXACT_MAX_N,
    };
    let p_value = if exact {
        exact_p(&ranks, w_plus)
    } else {
        approx_p(&ranks, w_plus)
    };
    Ok(WilcoxonResult {
        p_value,
        w_plus,
        n,
        exact,
    })
}

/// Exact null distribution of the doubled rank sum, built by convolving one
/// rank at a time (each sign equally likely).
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut dist = vec![0.0f64; total + 1];
    dist[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        reach += r;
        for s in (0..=reach).rev() {
            let with = if s >= r { dist[s - r] } else { 0.0 };
            dist[s] = 0.5 * (dist[s] + with);
        }
    }
    let obs = (2.0 * w_plus).round() as usize;
    let lower: f64 = dist[..=obs].iter().sum();
    let upper: f64 = dist[obs..].iter().sum();
    (2.0 * lower.min(upper)).min(1.0)
}

/// Normal approximation with continuity and tie corrections.
fn approx_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let tie_term: f64 = sorted
        .chunk_by(|x, y| x == y)
        .map(|g| {
            let t = g.len() as f64;
            t * t * t - t
        })
        .sum();
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if !(var > 0.0) {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

// =============================================================================
// Significance report
// =============================================================================

/// Strict comparison against the adjusted level.
pub fn is_significant(p_value: f64, alpha_adj: f64) -> bool {
    p_value < alpha_adj
}

/// Per-case values of one metric for one method. `None` marks an undefined
/// value (e.g. HD95 of a missed lesion); such cases are dropped pairwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodTable {
    pub method: String,
    pub values: BTreeMap<String, Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub metric: String,
    pub method_a: String,
    pub method_b: String,
    /// Cases with defined values for both methods.
    pub n_pairs: usize,
    /// `None` when no pair differs.
    pub p_value: Option<f64>,
    pub alpha_adj: f64,
    pub significant: bool,
}

/// Runs the Wilcoxon test for every pair of methods on one metric and flags
/// `p < alpha / n_comparisons`.
pub fn significance_report(
    metric: &str,
    tables: &[MethodTable],
    alpha: f64,
    n_comparisons: usize,
    mode: WilcoxonMode,
) -> Result<Vec<SignificanceRow>> {
    let alpha_adj = bonferroni(alpha, n_comparisons)?;
    if let Some(first) = tables.first() {
        for t in &tables[1..] {
            if !t.values.keys().eq(first.values.keys()) {
                let missing: Vec<&String> = first
                    .values
                    .keys()
                    .filter(|k| !t.values.contains_key(*k))
                    .chain(t.values.keys().filter(|k| !first.values.contains_key(*k)))
                    .take(5)
                    .collect();
                return Err(Error::MisalignedCases(format!(
                    "{} vs {}: {missing:?}",
                    first.method, t.method
                )));
            }
        }
    }
    let mut rows = Vec::new();
    for (i, ta) in tables.iter().enumerate() {
        for tb in &tables[i + 1..] {
            let (a, b): (Vec<f64>, Vec<f64>) = ta
                .values
                .iter()
                .filter_map(|(case, va)| Some(((*va)?, tb.values[case]?)))
                .unzip();
            let p_value = if a.is_empty() {
                None
            } else {
                match wilcoxon_signed_rank(&a, &b, mode) {
                    Ok(r) => Some(r.p_value),
                    Err(Error::AllZeroDifferences) => None,
                    Err(e) => return Err(e),
                }
            };
            rows.push(SignificanceRow {
                metric: metric.to_owned(),
                method_a: ta.method.clone(),
                method_b: tb.method.clone(),
                n_pairs: a.len(),
                p_value,
                alpha_adj,
                significant: p_value.is_some_and(|p| is_significant(p, alpha_adj)),
            });
        }
    }
    Ok(rows)
}
