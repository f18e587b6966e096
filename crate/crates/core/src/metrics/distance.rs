//! Boundary extraction, exact Euclidean distance transform and HD95.

use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::{Grid, Mask};
use crate::stats::percentile_sorted;

/// Mask voxels with at least one face neighbour outside the mask. Voxels on
/// the grid border count as boundary.
pub fn boundary(mask: &Mask) -> Mask {
    let grid = mask.grid();
    let dims = grid.dims();
    let data = mask.data();
    let out = (0..data.len())
        .into_par_iter()
        .map(|idx| {
            if !data[idx] {
                return false;
            }
            let [i, j, k] = grid.voxel_index(idx);
            let c = [i, j, k];
            for a in 0..3 {
                if c[a] == 0 || c[a] + 1 == dims[a] {
                    return true;
                }
                for d in [-1i64, 1] {
                    let mut n = c;
                    n[a] = (c[a] as i64 + d) as usize;
                    if !data[grid.linear_index(n[0], n[1], n[2])] {
                        return true;
                    }
                }
            }
            false
        })
        .collect();
    Mask::new(grid.clone(), out).expect("same grid")
}

/// Squared Euclidean distance in mm² from every voxel center to the nearest
/// voxel of `features`; infinite when there are none.
pub fn squared_distance_transform(features: &Mask) -> Vec<f64> {
    let grid = features.grid();
    let mut d: Vec<f64> = features
        .data()
        .iter()
        .map(|&f| if f { 0.0 } else { f64::INFINITY })
        .collect();
    for axis in 0..3 {
        transform_axis(grid, &mut d, axis);
    }
    d
}

fn transform_axis(grid: &Grid, d: &mut [f64], axis: usize) {
    let dims = grid.dims();
    let n = dims[axis];
    let w2 = grid.spacing()[axis].powi(2);
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    // the first voxel of every line along `axis`
    let starts: Vec<usize> = (0..grid.len())
        .filter(|&idx| grid.voxel_index(idx)[axis] == 0)
        .collect();
    let src: &[f64] = d;
    let lines: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&s| {
            let f: Vec<f64> = (0..n).map(|q| src[s + q * stride]).collect();
            lower_envelope(&f, w2)
        })
        .collect();
    for (s, line) in starts.iter().zip(lines) {
        for (q, v) in line.into_iter().enumerate() {
            d[s + q * stride] = v;
        }
    }
}

/// One-dimensional squared distance transform of sampled function `f` with
/// sample spacing² `w2` (lower envelope of parabolas).
fn lower_envelope(f: &[f64], w2: f64) -> Vec<f64> {
    let n = f.len();
    let sites: Vec<usize> = (0..n).filter(|&q| f[q].is_finite()).collect();
    if sites.is_empty() {
        return vec![f64::INFINITY; n];
    }
    let meet = |p: usize, q: usize| -> f64 {
        let (pf, qf) = (p as f64, q as f64);
        ((f[q] + w2 * qf * qf) - (f[p] + w2 * pf * pf)) / (2.0 * w2 * (qf - pf))
    };
    let mut v: Vec<usize> = Vec::with_capacity(sites.len());
    let mut z: Vec<f64> = Vec::with_capacity(sites.len() + 1);
    for &q in &sites {
        while let Some(&p) = v.last() {
            let s = meet(p, q);
            if s <= *z.last().expect("z tracks v") {
                v.pop();
                z.pop();
            } else {
                break;
            }
        }
        if v.is_empty() {
            z.push(f64::NEG_INFINITY);
        } else {
            z.push(meet(*v.last().unwrap(), q));
        }
        v.push(q);
    }
    let mut out = vec![0.0; n];
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        *o = w2 * dq * dq + f[v[k]];
    }
    out
}

/// Sorted distances in mm from each voxel of `from` to the nearest voxel of
/// `to`.
fn directed_distances(from: &Mask, to: &Mask) -> Vec<f64> {
    let sq = squared_distance_transform(to);
    let mut d: Vec<f64> = from
        .data()
        .iter()
        .zip(&sq)
        .filter(|(f, _)| **f)
        .map(|(_, s)| s.sqrt())
        .collect();
    d.sort_unstable_by(f64::total_cmp);
    d
}

/// Symmetric 95th-percentile Hausdorff distance between mask boundaries in
/// mm. `None` when either mask is empty.
pub fn hd95(pred: &Mask, gt: &Mask) -> Result<Option<f64>> {
    pred.grid().ensure_matches(gt.grid())?;
    if pred.is_empty() || gt.is_empty() {
        return Ok(None);
    }
    let bp = boundary(pred);
    let bg = boundary(gt);
    let a = percentile_sorted(&directed_distances(&bp, &bg), 95.0);
    let b = percentile_sorted(&directed_distances(&bg, &bp), 95.0);
    Ok(Some(a.max(b)))
}
