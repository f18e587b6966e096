//! Deliberately naive reference implementations, written against plain
//! arrays so they share no code with the library under test.
//!
//! Masks are `&[bool]` in x-fastest order on an axis-aligned grid with the
//! given dims and spacing.

/// Counts `(|P∩G|, |P|, |G|)`.
pub fn overlap_counts(p: &[bool], g: &[bool]) -> (usize, usize, usize) {
    let mut inter = 0;
    let mut np = 0;
    let mut ng = 0;
    for i in 0..p.len() {
        if p[i] {
            np += 1;
        }
        if g[i] {
            ng += 1;
        }
        if p[i] && g[i] {
            inter += 1;
        }
    }
    (inter, np, ng)
}

pub fn dice(p: &[bool], g: &[bool]) -> f64 {
    let (i, np, ng) = overlap_counts(p, g);
    if np + ng == 0 {
        1.0
    } else {
        2.0 * i as f64 / (np + ng) as f64
    }
}

/// Precision (0 for an empty prediction) and recall. `g` must be nonempty.
pub fn precision_recall(p: &[bool], g: &[bool]) -> (f64, f64) {
    let (i, np, ng) = overlap_counts(p, g);
    let precision = if np == 0 { 0.0 } else { i as f64 / np as f64 };
    (precision, i as f64 / ng as f64)
}

/// `|V_P - V_G| / V_G` from voxel counts. `g` must be nonempty.
pub fn rvd(p: &[bool], g: &[bool]) -> f64 {
    let (_, np, ng) = overlap_counts(p, g);
    (np as f64 - ng as f64).abs() / ng as f64
}

fn coords(dims: [usize; 3], idx: usize) -> [usize; 3] {
    [idx % dims[0], (idx / dims[0]) % dims[1], idx / (dims[0] * dims[1])]
}

/// Voxels of `m` with a face neighbour outside `m` or outside the grid.
pub fn boundary_points(dims: [usize; 3], spacing: [f64; 3], m: &[bool]) -> Vec<[f64; 3]> {
    let inside = |c: [i64; 3]| -> bool {
        if (0..3).any(|a| c[a] < 0 || c[a] >= dims[a] as i64) {
            return false;
        }
        m[c[0] as usize + dims[0] * (c[1] as usize + dims[1] * c[2] as usize)]
    };
    let mut out = Vec::new();
    for idx in 0..m.len() {
        if !m[idx] {
            continue;
        }
        let c = coords(dims, idx);
        let ci = [c[0] as i64, c[1] as i64, c[2] as i64];
        let neighbours = [
            [ci[0] - 1, ci[1], ci[2]],
            [ci[0] + 1, ci[1], ci[2]],
            [ci[0], ci[1] - 1, ci[2]],
            [ci[0], ci[1] + 1, ci[2]],
            [ci[0], ci[1], ci[2] - 1],
            [ci[0], ci[1], ci[2] + 1],
        ];
        if neighbours.iter().any(|n| !inside(*n)) {
            out.push([
                c[0] as f64 * spacing[0],
                c[1] as f64 * spacing[1],
                c[2] as f64 * spacing[2],
            ]);
        }
    }
    out
}

/// Linear-interpolation percentile of an unsorted list.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = p / 100.0 * (s.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (rank - lo as f64)
}

/// All-pairs HD95 over boundary voxels. `None` if either mask is empty.
pub fn hd95(dims: [usize; 3], spacing: [f64; 3], p: &[bool], g: &[bool]) -> Option<f64> {
    let bp = boundary_points(dims, spacing, p);
    let bg = boundary_points(dims, spacing, g);
    if bp.is_empty() || bg.is_empty() {
        return None;
    }
    let directed = |from: &[[f64; 3]], to: &[[f64; 3]]| -> Vec<f64> {
        from.iter()
            .map(|a| {
                to.iter()
                    .map(|b| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    };
    let d1 = percentile(&directed(&bp, &bg), 95.0);
    let d2 = percentile(&directed(&bg, &bp), 95.0);
    Some(d1.max(d2))
}

/// Scans every distinct score as a cut point (`score >= t` is positive) and
/// returns `(threshold, f1)` of the best one, preferring larger thresholds
/// on ties.
pub fn exhaustive_max_f1(scores: &[(f64, bool)]) -> (f64, f64) {
    let mut best: Option<(f64, f64)> = None;
    for &(t, _) in scores {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fneg = 0usize;
        for &(s, label) in scores {
            match (s >= t, label) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                (false, false) => {}
            }
        }
        let f1 = 2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fneg as f64);
        best = match best {
            None => Some((t, f1)),
            Some((bt, bf)) => {
                if f1 > bf || (f1 == bf && t > bt) {
                    Some((t, f1))
                } else {
                    Some((bt, bf))
                }
            }
        };
    }
    best.expect("nonempty scores")
}

/// Mann-Whitney U of positives over negatives divided by `n+ * n-`.
pub fn mann_whitney_auc(scores: &[(f64, bool)]) -> f64 {
    let mut u = 0.0;
    let mut npos = 0usize;
    let mut nneg = 0usize;
    for &(s, l) in scores {
        if l {
            npos += 1;
        } else {
            nneg += 1;
        }
        if !l {
            continue;
        }
        for &(t, m) in scores {
            if m {
                continue;
            }
            if s > t {
                u += 1.0;
            } else if s == t {
                u += 0.5;
            }
        }
    }
    u / (npos as f64 * nneg as f64)
}

/// Two-sided Wilcoxon signed-rank p-value by enumerating all 2^n sign
/// assignments of the nonzero differences (mid-ranks for ties).
pub fn wilcoxon_enumeration(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    let n = d.len();
    assert!(n <= 24, "enumeration is exponential");
    let mag: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks: Vec<f64> = mag
        .iter()
        .map(|&m| {
            let less = mag.iter().filter(|&&o| o < m).count() as f64;
            let equal = mag.iter().filter(|&&o| o == m).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let mut le = 0u64;
    let mut ge = 0u64;
    for signs in 0u64..(1u64 << n) {
        let w: f64 = (0..n).filter(|&i| signs >> i & 1 == 1).map(|i| ranks[i]).sum();
        // rank sums are multiples of 0.5, so compare on the doubled integers
        let (w2, o2) = ((2.0 * w).round() as i64, (2.0 * observed).round() as i64);
        if w2 <= o2 {
            le += 1;
        }
        if w2 >= o2 {
            ge += 1;
        }
    }
    let total = (1u64 << n) as f64;
    (2.0 * (le.min(ge) as f64) / total).min(1.0)
}
